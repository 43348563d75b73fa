#pragma once

#include <algorithm>
#include <iterator>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/pose.hpp"

namespace cobotpbd::kinematics {

struct FrameEdge {
  std::string parent;
  Pose6D parent_to_child;
  double stamp = 0.0;
};

/// Immutable tree version. Readers hold one of these and never see a
/// half-applied update.
class TransformSnapshot {
 public:
  static constexpr const char* root = "world";

  bool has_frame(const std::string& name) const { return name == root || edges_.count(name) > 0; }

  std::vector<std::string> frames() const {
    std::vector<std::string> names{root};
    for (const auto& [name, edge] : edges_) names.push_back(name);
    return names;
  }

  const FrameEdge& edge(const std::string& child) const {
    auto it = edges_.find(child);
    if (it == edges_.end()) throw LookupError("unknown frame '" + child + "'");
    return it->second;
  }

  /// Chain of frames from `name` up to its top-most ancestor (inclusive).
  std::vector<std::string> ancestry(const std::string& name) const {
    if (!has_frame(name) && !is_dangling_parent(name)) throw LookupError("unknown frame '" + name + "'");
    std::vector<std::string> chain{name};
    std::string cur = name;
    while (true) {
      auto it = edges_.find(cur);
      if (it == edges_.end()) break;
      cur = it->second.parent;
      chain.push_back(cur);
    }
    return chain;
  }

  /// Pose of `name` in the root frame.
  Pose6D in_root(const std::string& name) const {
    const auto chain = ancestry(name);
    if (chain.back() != root) {
      throw LookupError("frame '" + name + "' is not connected to '" + std::string(root) + "'");
    }
    Pose6D t;
    for (auto it = chain.rbegin(); it + 1 != chain.rend(); ++it) {
      t = t * edges_.at(*(it + 1)).parent_to_child;
    }
    return t;
  }

  /// Pose of frame `to` expressed in frame `from`, evaluated through the root.
  Pose6D lookup(const std::string& from, const std::string& to) const {
    check_known(from);
    check_known(to);
    if (from == to) return Pose6D::identity();
    return in_root(from).inverse() * in_root(to);
  }

  /// Same quantity evaluated through the lowest common ancestor only.
  Pose6D lookup_via_common_ancestor(const std::string& from, const std::string& to) const {
    check_known(from);
    check_known(to);
    const auto a = ancestry(from);
    const auto b = ancestry(to);
    const std::set<std::string> b_set(b.begin(), b.end());
    std::string common;
    for (const auto& f : a) {
      if (b_set.count(f)) {
        common = f;
        break;
      }
    }
    if (common.empty()) throw LookupError("frames '" + from + "' and '" + to + "' are disconnected");
    auto from_common = [&](const std::vector<std::string>& chain) {
      Pose6D t;
      auto it = std::find(chain.begin(), chain.end(), common);
      for (auto rit = std::make_reverse_iterator(it); rit != chain.rend(); ++rit) {
        t = t * edges_.at(*rit).parent_to_child;
      }
      return t;
    };
    return from_common(a).inverse() * from_common(b);
  }

 private:
  friend class TransformTree;

  bool is_dangling_parent(const std::string& name) const {
    for (const auto& [child, e] : edges_) {
      if (e.parent == name) return true;
    }
    return false;
  }

  void check_known(const std::string& name) const {
    if (!has_frame(name)) throw LookupError("unknown frame '" + name + "'");
  }

  std::map<std::string, FrameEdge> edges_;  // keyed by child
};

/// Single writer, many readers. Each write publishes a new snapshot.
class TransformTree {
 public:
  TransformTree() : current_(std::make_shared<const TransformSnapshot>()) {}

  /// Adds or replaces the edge parent -> child. Rejects edits that would
  /// create a cycle or re-parent the root.
  void set_transform(const std::string& parent, const std::string& child, const Pose6D& parent_to_child,
                     double stamp = 0.0) {
    if (child == TransformSnapshot::root) throw LookupError("the root frame cannot have a parent");
    if (parent == child) throw LookupError("frame '" + child + "' cannot be its own parent");
    std::lock_guard lock(write_mutex_);
    auto next = std::make_shared<TransformSnapshot>(*snapshot());
    // walking up from the parent must not reach the child
    std::string cur = parent;
    while (true) {
      if (cur == child) throw LookupError("edge " + parent + " -> " + child + " would create a cycle");
      auto it = next->edges_.find(cur);
      if (it == next->edges_.end()) break;
      cur = it->second.parent;
    }
    next->edges_[child] = FrameEdge{parent, parent_to_child, stamp};
    publish(std::move(next));
  }

  void remove_frame(const std::string& child) {
    std::lock_guard lock(write_mutex_);
    auto next = std::make_shared<TransformSnapshot>(*snapshot());
    next->edges_.erase(child);
    publish(std::move(next));
  }

  std::shared_ptr<const TransformSnapshot> snapshot() const {
    std::lock_guard lock(read_mutex_);
    return current_;
  }

  Pose6D lookup(const std::string& from, const std::string& to) const { return snapshot()->lookup(from, to); }
  bool has_frame(const std::string& name) const { return snapshot()->has_frame(name); }

 private:
  void publish(std::shared_ptr<const TransformSnapshot> next) {
    std::lock_guard lock(read_mutex_);
    current_ = std::move(next);
  }

  mutable std::mutex read_mutex_;
  std::mutex write_mutex_;
  std::shared_ptr<const TransformSnapshot> current_;
};

}  // namespace cobotpbd::kinematics
