#include <gtest/gtest.h>

#include "../support/fuzz.hpp"
#include "../support/tcp_client.hpp"
#include "cobotpbd/gateway/server.hpp"

using namespace cobotpbd;
using namespace cobotpbd::gateway;
using kinematics::Pose6D;
using std::chrono::milliseconds;

namespace {

Message ctrl_pose_message(std::uint64_t seq, const Pose6D& p) {
  return Message{MessageType::ctrl_pose, seq, {{"pose", kinematics::pose_to_json(p)}}};
}

Message mode_message(std::uint64_t seq, const char* source) {
  return Message{MessageType::mode_switch, seq, {{"source", source}}};
}

std::string diag_code(const DecodeResult& r) {
  const auto* d = std::get_if<Diagnostic>(&r);
  return d ? d->code : std::string{};
}

/// Hub wired straight into an engine, ticked by hand.
struct Rig {
  taskflow::Engine engine{taskflow::EngineConfig{}};
  Hub hub{[this](taskflow::Command c) { engine.enqueue(std::move(c)); }};
  std::map<ClientId, std::vector<Message>> inbox;

  /// Connects with a sink that files messages under the returned id.
  ClientId join() {
    auto holder = std::make_shared<ClientId>(0);
    const ClientId id = hub.connect([this, holder](const Message& m) { inbox[*holder].push_back(m); });
    *holder = id;
    return id;
  }

  std::vector<std::string> codes(ClientId id) const {
    std::vector<std::string> out;
    auto it = inbox.find(id);
    if (it == inbox.end()) return out;
    for (const auto& m : it->second) {
      if (m.type != MessageType::diagnostics) continue;
      for (const auto& d : m.payload["diagnostics"]) out.push_back(d["code"]);
    }
    return out;
  }
};

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

}  // namespace

// ---------------------------------------------------------------------------
// Codec

TEST(Codec, CtrlPoseRoundTrip) {
  std::mt19937_64 rng(30);
  const Message m = ctrl_pose_message(42, oracle::random_pose(rng));
  const std::string line = encode(m);
  ASSERT_EQ(line.back(), '\n');
  EXPECT_EQ(std::count(line.begin(), line.end(), '\n'), 1);
  const auto r = decode(line);
  ASSERT_TRUE(std::holds_alternative<Message>(r));
  EXPECT_EQ(std::get<Message>(r), m);
  const auto cmd = std::get<taskflow::CtrlPoseCommand>(to_command(std::get<Message>(r)));
  EXPECT_EQ(cmd.seq, 42u);
  EXPECT_LT(kinematics::translation_distance(cmd.pose, kinematics::pose_from_json(m.payload["pose"])), 1e-15);
}

TEST(Codec, WireFieldNames) {
  const std::string line = encode(mode_message(1, "teleop"));
  EXPECT_EQ(line, "{\"payload\":{\"source\":\"teleop\"},\"seq\":1,\"type\":\"mode_switch\"}\n");
}

TEST(Codec, GarbageLineThenValidLine) {
  LineDecoder dec;
  const auto out = dec.feed("this is not json\n" + encode(mode_message(2, "idle")));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(diag_code(out[0]), "malformed-json");
  ASSERT_TRUE(std::holds_alternative<Message>(out[1]));
  EXPECT_EQ(std::get<Message>(out[1]).type, MessageType::mode_switch);
}

TEST(Codec, ErrorCodes) {
  EXPECT_EQ(diag_code(decode("[1]")), "invalid-message");
  EXPECT_EQ(diag_code(decode("{\"type\":\"warp\",\"seq\":0}")), "unknown-type");
  EXPECT_EQ(diag_code(decode("{\"type\":\"ctrl_pose\",\"seq\":1.5,\"payload\":{}}")), "invalid-message");
  EXPECT_EQ(diag_code(decode("{\"type\":\"ctrl_pose\",\"seq\":1,\"payload\":{}}")), "invalid-payload");
  EXPECT_EQ(diag_code(decode("{\"type\":\"task_control\",\"seq\":1,\"payload\":{\"action\":\"pause\"}}")), "invalid-payload");
  EXPECT_EQ(diag_code(decode("{\"type\":\"register_points\",\"seq\":1,\"payload\":{\"p0\":[0,0,0],\"p1\":[1,0,0]}}")),
            "invalid-payload");
}

TEST(Codec, SplitDeliveryAndOverlongLine) {
  LineDecoder dec(64);
  const std::string enc = encode(mode_message(3, "autonomous"));
  std::vector<DecodeResult> all;
  for (char c : enc) {
    auto r = dec.feed(std::string(1, c));
    all.insert(all.end(), r.begin(), r.end());
  }
  ASSERT_EQ(all.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<Message>(all[0]));
  const auto big = dec.feed(std::string(200, 'x') + "\n" + enc);
  ASSERT_EQ(big.size(), 2u);
  EXPECT_EQ(diag_code(big[0]), "line-too-long");
  EXPECT_TRUE(std::holds_alternative<Message>(big[1]));
}

TEST(Codec, FuzzRoundTrip) {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 2000; ++i) {
    const Message m = fuzz::random_message(rng);
    const auto r = decode(encode(m));
    ASSERT_TRUE(std::holds_alternative<Message>(r)) << encode(m) << diag_code(r);
    EXPECT_EQ(std::get<Message>(r), m);
  }
}

TEST(Codec, FuzzMalformedNeverDecodes) {
  std::mt19937_64 rng(32);
  for (int i = 0; i < 2000; ++i) {
    const std::string line = fuzz::malformed_line(rng);
    EXPECT_TRUE(std::holds_alternative<Diagnostic>(decode(line))) << line;
  }
}

TEST(Codec, SeqTracker) {
  SeqTracker t;
  EXPECT_FALSE(t.observe(5));
  EXPECT_FALSE(t.observe(6));
  const auto gap = t.observe(9);
  ASSERT_TRUE(gap);
  EXPECT_EQ(gap->code, "seq-gap");
  const auto back = t.observe(4);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->code, "seq-regression");
  EXPECT_EQ(t.last(), 9u);
}

TEST(Codec, OutboundTypesAreNotCommands) {
  for (auto t : kAllMessageTypes) {
    std::mt19937_64 rng(33);
    const Message m{t, 1, fuzz::random_payload(t, rng)};
    if (is_inbound(t)) {
      EXPECT_NO_THROW(to_command(m)) << to_string(t);
    } else {
      EXPECT_THROW(to_command(m), ConfigError) << to_string(t);
    }
  }
}

// ---------------------------------------------------------------------------
// Hub token rules

TEST(Hub, OnlyTokenHolderDrives) {
  Rig rig;
  const ClientId a = rig.join();
  const ClientId b = rig.join();
  rig.hub.handle(a, mode_message(1, "teleop"));
  EXPECT_EQ(rig.hub.token_holder(), a);

  rig.hub.handle(b, mode_message(1, "teleop"));
  EXPECT_TRUE(contains(rig.codes(b), "read-only"));
  EXPECT_EQ(rig.hub.token_holder(), a);

  rig.hub.handle(b, ctrl_pose_message(2, Pose6D::from_translation(1, 1, 1)));
  rig.hub.handle(a, ctrl_pose_message(2, Pose6D::identity()));
  const Pose6D ee0 = rig.engine.world().ee_pose();  // teleop anchors here
  rig.engine.tick();
  ASSERT_TRUE(rig.engine.teleop_active());
  rig.hub.handle(a, ctrl_pose_message(3, Pose6D::from_translation(0.01, 0, 0)));
  rig.hub.handle(b, ctrl_pose_message(3, Pose6D::from_translation(0.5, 0.5, 0.5)));
  rig.engine.tick();
  ASSERT_TRUE(rig.engine.last_target());
  EXPECT_LT((rig.engine.last_target()->translation() - ee0.translation() - kinematics::Vector3(0.01, 0, 0)).norm(), 1e-9);
}

TEST(Hub, CtrlPoseWithoutTokenRejected) {
  Rig rig;
  const ClientId a = rig.join();
  rig.hub.handle(a, ctrl_pose_message(1, Pose6D::identity()));
  EXPECT_TRUE(contains(rig.codes(a), "no-teleop-token"));
}

TEST(Hub, AutonomousReleasesToken) {
  Rig rig;
  const ClientId a = rig.join();
  const ClientId b = rig.join();
  rig.hub.handle(a, mode_message(1, "teleop"));
  rig.hub.handle(a, mode_message(2, "autonomous"));
  EXPECT_FALSE(rig.hub.token_holder());
  rig.hub.handle(b, mode_message(1, "teleop"));
  EXPECT_EQ(rig.hub.token_holder(), b);
}

TEST(Hub, OutboundTypeRejectedAndSeqGapWarned) {
  Rig rig;
  const ClientId a = rig.join();
  rig.hub.handle(a, Message{MessageType::state_snapshot, 1, json::object()});
  rig.hub.handle(a, mode_message(5, "idle"));
  const auto codes = rig.codes(a);
  EXPECT_TRUE(contains(codes, "not-a-command"));
  EXPECT_TRUE(contains(codes, "seq-gap"));
}

TEST(Hub, HolderDisconnectStopsRobotNextTick) {
  Rig rig;
  const ClientId a = rig.join();
  rig.hub.handle(a, mode_message(1, "teleop"));
  rig.hub.handle(a, ctrl_pose_message(2, Pose6D::identity()));
  rig.engine.tick();
  rig.hub.handle(a, ctrl_pose_message(3, Pose6D::from_translation(0.2, 0, 0)));
  rig.engine.tick();
  ASSERT_GT(rig.engine.commanded_twist().linear.norm(), 0.0);
  rig.hub.disconnect(a);
  EXPECT_FALSE(rig.hub.token_holder());
  rig.engine.tick();
  EXPECT_EQ(rig.engine.mux().active_source, taskflow::ControlSource::idle);
  EXPECT_TRUE(rig.engine.commanded_twist().linear.isZero());
  EXPECT_TRUE(rig.engine.commanded_twist().angular.isZero());
}

TEST(Hub, SendNumbersOutboundSeqPerClient) {
  Rig rig;
  const ClientId a = rig.join();
  const ClientId b = rig.join();
  rig.hub.broadcast(MessageType::haptic_frame, json::object());
  rig.hub.send(a, MessageType::haptic_frame, json::object());
  ASSERT_EQ(rig.inbox[a].size(), 2u);
  ASSERT_EQ(rig.inbox[b].size(), 1u);
  EXPECT_EQ(rig.inbox[a][0].seq, 1u);
  EXPECT_EQ(rig.inbox[a][1].seq, 2u);
}

TEST(Outbox, DropsOldestWhenFull) {
  Outbox box(3);
  for (int i = 0; i < 5; ++i) box.push(std::to_string(i));
  const auto lines = box.take(milliseconds(0));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines.front(), "2");
  EXPECT_EQ(box.dropped(), 2u);
}

// ---------------------------------------------------------------------------
// Live servers

namespace {

std::optional<json> read_until(testing_support::TcpClient& c, const std::function<bool(const json&)>& pred,
                               milliseconds timeout = milliseconds(3000)) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    auto line = c.read_line(milliseconds(200));
    if (!line) continue;
    const json j = json::parse(*line, nullptr, false);
    if (!j.is_discarded() && pred(j)) return j;
  }
  return std::nullopt;
}

bool has_diag_code(const json& m, const std::string& code) {
  if (m.value("type", "") != "diagnostics") return false;
  for (const auto& d : m["payload"]["diagnostics"]) {
    if (d.value("code", "") == code) return true;
  }
  return false;
}

}  // namespace

TEST(TcpServer, SnapshotsGarbageAndTokenLoss) {
  taskflow::Engine engine{taskflow::EngineConfig{}};
  EngineService service(engine, ServiceConfig{60.0, true});
  TcpServer server(service.hub());
  server.start(0, "127.0.0.1");
  service.start();
  ASSERT_GT(server.port(), 0);

  {
    testing_support::TcpClient client("127.0.0.1", server.port());
    EXPECT_TRUE(read_until(client, [](const json& j) { return j.value("type", "") == "state_snapshot"; }));

    client.send("\x01\x02 not json\n" + encode(mode_message(1, "teleop")) + "{\"type\":\"ctrl_pose\"\n");
    EXPECT_TRUE(read_until(client, [](const json& j) { return has_diag_code(j, "malformed-json"); }));
    auto snap = read_until(client, [](const json& j) {
      return j.value("type", "") == "state_snapshot" && j["payload"].value("mux", "") == "teleop";
    });
    ASSERT_TRUE(snap);
    EXPECT_EQ(service.hub().token_holder().value_or(0), 1u);
  }
  // client gone: the token is released and the engine drops to idle
  const auto deadline = std::chrono::steady_clock::now() + milliseconds(3000);
  while (std::chrono::steady_clock::now() < deadline &&
         (service.hub().token_holder() || engine.snapshot_json(false)["mux"] != "idle")) {
    std::this_thread::sleep_for(milliseconds(10));
  }
  service.stop();
  EXPECT_FALSE(service.hub().token_holder());
  EXPECT_EQ(engine.mux().active_source, taskflow::ControlSource::idle);
  EXPECT_TRUE(engine.commanded_twist().linear.isZero());
  server.stop();
}

TEST(TcpServer, SnapshotRateNearConfigured) {
  taskflow::Engine engine{taskflow::EngineConfig{}};
  EngineService service(engine, ServiceConfig{60.0, false});
  TcpServer server(service.hub());
  server.start(0, "127.0.0.1");
  service.start();
  testing_support::TcpClient client("127.0.0.1", server.port());
  ASSERT_TRUE(read_until(client, [](const json& j) { return j.value("type", "") == "state_snapshot"; }));
  const auto t0 = std::chrono::steady_clock::now();
  int count = 0;
  while (std::chrono::steady_clock::now() - t0 < milliseconds(1000)) {
    auto line = client.read_line(milliseconds(100));
    if (line && line->find("\"state_snapshot\"") != std::string::npos) ++count;
  }
  service.stop();
  server.stop();
  EXPECT_GE(count, 40);
  EXPECT_LE(count, 70);
}

TEST(HttpBridge, ConnectSendEventsSchema) {
  taskflow::Engine engine{taskflow::EngineConfig{}};
  EngineService service(engine, ServiceConfig{20.0, false});
  HttpBridge bridge(service.hub());
  bridge.start(0, "127.0.0.1");
  service.start();

  httplib::Client http("127.0.0.1", bridge.port());
  auto schema = http.Get("/schema");
  ASSERT_TRUE(schema);
  EXPECT_EQ(schema->status, 200);
  EXPECT_EQ(schema->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_TRUE(json::parse(schema->body).is_object());

  auto conn = http.Post("/connect", "", "application/json");
  ASSERT_TRUE(conn);
  const auto id = json::parse(conn->body)["client"].get<ClientId>();
  const std::string q = "?client=" + std::to_string(id);

  auto sent = http.Post(("/send" + q).c_str(), "garbage\n" + encode(mode_message(1, "teleop")), "application/x-ndjson");
  ASSERT_TRUE(sent);
  EXPECT_EQ(json::parse(sent->body)["received"], 2);
  EXPECT_EQ(service.hub().token_holder(), id);

  std::string events;
  httplib::Client stream("127.0.0.1", bridge.port());
  stream.set_read_timeout(5, 0);
  stream.Get(("/events" + q).c_str(), [&](const char* data, std::size_t len) {
    events.append(data, len);
    return events.find("state_snapshot") == std::string::npos;
  });
  EXPECT_NE(events.find("data: {"), std::string::npos);
  EXPECT_NE(events.find("malformed-json"), std::string::npos);
  EXPECT_NE(events.find("state_snapshot"), std::string::npos);

  auto bye = http.Post(("/disconnect" + q).c_str(), "", "text/plain");
  ASSERT_TRUE(bye);
  EXPECT_FALSE(service.hub().token_holder());
  EXPECT_EQ(http.Post(("/send" + q).c_str(), "", "text/plain")->status, 404);
  service.stop();
  bridge.stop();
}
