#pragma once

#include "cobotpbd/kinematics/differential_ik.hpp"
#include "cobotpbd/kinematics/forward_kinematics.hpp"
#include "cobotpbd/kinematics/pose.hpp"
#include "cobotpbd/kinematics/pose_json.hpp"
#include "cobotpbd/kinematics/registration.hpp"
#include "cobotpbd/kinematics/robot_model.hpp"
#include "cobotpbd/kinematics/transform_tree.hpp"
