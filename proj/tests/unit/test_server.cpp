#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <future>
#include <sstream>
#include <thread>

#include "echonav/errors.hpp"
#include "echonav/server.hpp"

using namespace echonav;
using nlohmann::json;

namespace {

struct World {
  AccelStructure accel{fixtures::two_room()};
  NavGraph graph = build_nav_graph(prune(place_candidates(accel.scene(), 0.5, 1.5), accel, PruneOptions{}), accel);
  std::vector<Episode> episodes;
  World() {
    for (std::uint32_t i = 0; i < 3; ++i) {
      Episode e;
      e.id = "ep" + std::to_string(i);
      e.start_node = i;
      e.goal_node = static_cast<std::uint32_t>(graph.node_count() - 1 - i);
      e.start_heading = static_cast<int>(i);
      e.task = Task::PointGoal;
      episodes.push_back(e);
    }
  }
  EnvConfig config(VisualMode mode = VisualMode::Depth) const {
    EnvConfig c;
    c.visual_mode = mode;
    c.view_resolution = 8;
    return c;
  }
};

json ask(Session& s, const json& msg) { return json::parse(s.handle(msg.dump())); }

}  // namespace

TEST_CASE("base64 and tensors") {
  CHECK(base64_encode({}) == "");
  CHECK(base64_encode({'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  CHECK(base64_decode("Zm9vYg==") == std::vector<unsigned char>{'f', 'o', 'o', 'b'});
  CHECK_THROWS_AS(base64_decode("@@@"), ParseError);
  const std::vector<float> v{1.0f, -2.5f, 3e-9f, 0.0f, 7.0f, 8.0f};
  const json t = encode_tensor({2, 3}, v);
  CHECK(t["dtype"] == "f32le");
  CHECK(t["shape"] == json::array({2, 3}));
  // 1.0f little-endian is 00 00 80 3f.
  CHECK(t["data"].get<std::string>().rfind("AACAP", 0) == 0);
  std::vector<int> shape;
  CHECK(decode_tensor(t, &shape) == v);
  CHECK(shape == std::vector<int>{2, 3});
  json bad = t;
  bad["shape"] = {4, 3};
  CHECK_THROWS_AS(decode_tensor(bad), ParseError);
}

TEST_CASE("protocol messages") {
  World w;
  NavEnv env(&w.accel, w.graph, {}, nullptr, w.config());
  Session s(env, w.episodes, {{"scene", "two_room"}});

  const json info = ask(s, {{"cmd", "info"}});
  CHECK(info["ok"] == true);
  CHECK(info["config"]["episodes"] == 3);
  CHECK(info["config"]["horizon"] == 500);
  CHECK(info["config"]["scene"] == "two_room");
  CHECK(info["config"]["node_count"] == w.graph.node_count());

  const json reset = ask(s, {{"cmd", "reset"}, {"episode", "ep1"}});
  REQUIRE(reset["ok"] == true);
  CHECK(reset["obs"]["depth"]["shape"] == json::array({8, 8, 1}));
  CHECK(reset["obs"]["delta"]["shape"] == json::array({2}));
  CHECK_FALSE(reset["obs"].contains("audio"));

  const json step = ask(s, {{"cmd", "step"}, {"action", "TurnLeft"}});
  REQUIRE(step["ok"] == true);
  CHECK(step["reward"].get<double>() == doctest::Approx(-0.01));
  CHECK(step["done"] == false);
  CHECK(step["info"]["step"] == 1);

  CHECK(ask(s, {{"cmd", "step"}})["error"] == "missing field: action");
  CHECK(ask(s, {{"cmd", "step"}, {"action", "Jump"}})["ok"] == false);
  CHECK(ask(s, {{"cmd", "reset"}})["error"] == "missing field: episode");
  CHECK(ask(s, {{"cmd", "reset"}, {"episode", "nope"}})["ok"] == false);
  CHECK(ask(s, {{"action", "Stop"}})["error"] == "missing field: cmd");
  CHECK(ask(s, {{"cmd", "dance"}})["ok"] == false);
  CHECK(json::parse(s.handle("{not json"))["error"] == "malformed JSON");
  // The session survives errors.
  CHECK(ask(s, {{"cmd", "step"}, {"action", "Stop"}})["done"] == true);
  CHECK(ask(s, {{"cmd", "step"}, {"action", "Stop"}})["ok"] == false);
}

TEST_CASE("served observations equal in-process observations") {
  World w;
  NavEnv served_env(&w.accel, w.graph, {}, nullptr, w.config(VisualMode::Rgb));
  NavEnv local(&w.accel, w.graph, {}, nullptr, w.config(VisualMode::Rgb));
  Session s(served_env, w.episodes);
  std::ostringstream script;
  const std::vector<std::string> actions{"MoveForward", "TurnLeft", "MoveForward", "TurnRight", "MoveForward", "Stop"};
  script << json{{"cmd", "reset"}, {"episode", "ep0"}}.dump() << "\n";
  for (const auto& a : actions) script << json{{"cmd", "step"}, {"action", a}}.dump() << "\r\n\n";
  std::istringstream in(script.str());
  std::ostringstream out;
  serve_stream(s, in, out);

  std::istringstream replies(out.str());
  std::string line;
  std::getline(replies, line);
  const Observation first = local.reset(w.episodes[0]);
  CHECK(json::parse(line)["obs"] == observation_to_json(first, VisualMode::Rgb));
  for (const auto& a : actions) {
    REQUIRE(std::getline(replies, line));
    const json r = json::parse(line);
    const StepResult expected = local.step(parse_action(a));
    CHECK(r["obs"] == observation_to_json(expected.observation, VisualMode::Rgb));
    CHECK(r["reward"].get<double>() == expected.reward);
    CHECK(r["done"] == expected.done);
    CHECK(r["info"]["collision"] == expected.info.collision);
    const auto rgb = decode_tensor(r["obs"]["rgb"]);
    CHECK(rgb == expected.observation.visual->rgb);
  }
  CHECK_FALSE(std::getline(replies, line));
}

TEST_CASE("TCP round trip") {
  World w;
  NavEnv env(nullptr, w.graph, {}, nullptr, w.config(VisualMode::Blind));
  Session s(env, w.episodes);
  std::promise<int> bound;
  std::thread server([&] { serve_tcp(s, 0, [&](int port) { bound.set_value(port); }); });
  const int port = bound.get_future().get();

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
  const std::string request = json{{"cmd", "reset"}, {"episode", "ep2"}}.dump() + "\n" +
                              json{{"cmd", "step"}, {"action", "Stop"}}.dump() + "\n";
  REQUIRE(::send(fd, request.data(), request.size(), 0) == static_cast<ssize_t>(request.size()));
  std::string received;
  char buf[4096];
  while (std::count(received.begin(), received.end(), '\n') < 2) {
    const ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    REQUIRE(n > 0);
    received.append(buf, static_cast<std::size_t>(n));
  }
  ::close(fd);
  server.join();
  std::istringstream lines(received);
  std::string line;
  std::getline(lines, line);
  CHECK(json::parse(line)["ok"] == true);
  std::getline(lines, line);
  const json stop = json::parse(line);
  CHECK(stop["done"] == true);
  CHECK(stop["success"] == false);
}
