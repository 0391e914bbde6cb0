#include "echonav/server.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

#include <sodium.h>

#include "echonav/errors.hpp"

namespace echonav {

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out(sodium_base64_encoded_len(bytes.size(), sodium_base64_VARIANT_ORIGINAL), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  std::vector<unsigned char> out(text.size() / 4 * 3 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0)
    throw ParseError("invalid base64 data");
  out.resize(len);
  return out;
}

nlohmann::json encode_tensor(const std::vector<int>& shape, const std::vector<float>& values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return {{"shape", shape}, {"dtype", "f32le"}, {"data", base64_encode(bytes)}};
}

std::vector<float> decode_tensor(const nlohmann::json& tensor, std::vector<int>* shape) {
  if (tensor.at("dtype") != "f32le") throw ParseError("tensor dtype must be f32le");
  const auto dims = tensor.at("shape").get<std::vector<int>>();
  std::size_t count = 1;
  for (int d : dims) count *= static_cast<std::size_t>(d);
  const auto bytes = base64_decode(tensor.at("data").get<std::string>());
  if (bytes.size() != count * 4) throw ParseError("tensor data does not match its shape");
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 4);
  }
  if (shape) *shape = dims;
  return out;
}

nlohmann::json observation_to_json(const Observation& obs, VisualMode mode) {
  nlohmann::json j = nlohmann::json::object();
  if (obs.audio) j["audio"] = encode_tensor({obs.audio->freq, obs.audio->time, obs.audio->channels}, obs.audio->data);
  if (obs.intensity)
    j["intensity"] = encode_tensor({2}, {static_cast<float>(obs.intensity->first), static_cast<float>(obs.intensity->second)});
  if (obs.visual) {
    const ViewFrame& v = *obs.visual;
    if (mode == VisualMode::Depth) j["depth"] = encode_tensor({v.height, v.width, 1}, v.depth);
    if (mode == VisualMode::Rgb) j["rgb"] = encode_tensor({v.height, v.width, 3}, v.rgb);
  }
  if (obs.delta)
    j["delta"] = encode_tensor({2}, {static_cast<float>((*obs.delta)[0]), static_cast<float>((*obs.delta)[1])});
  return j;
}

Session::Session(NavEnv& env, std::vector<Episode> episodes, nlohmann::json static_config)
    : env_(env), static_config_(std::move(static_config)) {
  for (Episode& e : episodes) {
    const std::string id = e.id;
    if (!episodes_.emplace(id, std::move(e)).second) throw ValidationError("duplicate episode id " + id);
  }
}

std::string Session::handle(const std::string& line) {
  nlohmann::json reply;
  try {
    const auto msg = nlohmann::json::parse(line);
    if (!msg.is_object()) throw ParseError("message must be a JSON object");
    reply = dispatch(msg);
  } catch (const nlohmann::json::parse_error&) {
    reply = {{"ok", false}, {"error", "malformed JSON"}};
  } catch (const std::exception& e) {
    reply = {{"ok", false}, {"error", e.what()}};
  }
  return reply.dump();
}

nlohmann::json Session::dispatch(const nlohmann::json& msg) {
  if (!msg.contains("cmd") || !msg["cmd"].is_string()) throw ParseError("missing field: cmd");
  const std::string cmd = msg["cmd"];
  const VisualMode mode = env_.config().visual_mode;
  if (cmd == "reset") {
    if (!msg.contains("episode") || !msg["episode"].is_string()) throw ParseError("missing field: episode");
    const auto it = episodes_.find(msg["episode"].get<std::string>());
    if (it == episodes_.end()) throw NotFoundError("unknown episode: " + msg["episode"].get<std::string>());
    const Observation obs = env_.reset(it->second);
    return {{"ok", true}, {"obs", observation_to_json(obs, mode)}};
  }
  if (cmd == "step") {
    if (!msg.contains("action") || !msg["action"].is_string()) throw ParseError("missing field: action");
    const Action action = parse_action(msg["action"].get<std::string>());
    const StepResult r = env_.step(action);
    return {{"ok", true},
            {"obs", observation_to_json(r.observation, mode)},
            {"reward", r.reward},
            {"done", r.done},
            {"success", r.success},
            {"info", {{"geodesic", r.info.geodesic}, {"collision", r.info.collision}, {"step", r.info.step}}}};
  }
  if (cmd == "info") {
    nlohmann::json config = static_config_;
    config["episodes"] = episodes_.size();
    config["horizon"] = kHorizon;
    config["actions"] = {"MoveForward", "TurnLeft", "TurnRight", "Stop"};
    config["visual_mode"] = to_string(mode);
    config["intensity_only"] = env_.config().intensity_only;
    config["gps_noise_sigma"] = env_.config().gps_noise_sigma;
    config["node_count"] = env_.graph().node_count();
    config["resolution"] = env_.graph().resolution();
    return {{"ok", true}, {"config", config}};
  }
  throw ParseError("unknown cmd: " + cmd);
}

void serve_stream(Session& session, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out << session.handle(line) << '\n' << std::flush;
  }
}

namespace {

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

void serve_tcp(Session& session, int port, const std::function<void(int)>& on_listening) {
  Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.get() < 0) throw StorageError(std::string("socket: ") + std::strerror(errno));
  const int yes = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw StorageError("bind 127.0.0.1:" + std::to_string(port) + ": " + std::strerror(errno));
  if (::listen(listener.get(), 1) != 0) throw StorageError(std::string("listen: ") + std::strerror(errno));
  socklen_t len = sizeof addr;
  ::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_listening) on_listening(ntohs(addr.sin_port));

  Fd client(::accept(listener.get(), nullptr, nullptr));
  if (client.get() < 0) throw StorageError(std::string("accept: ") + std::strerror(errno));
  std::string buffer;
  char chunk[4096];
  for (;;) {
    const ssize_t n = ::recv(client.get(), chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return;
    buffer.append(chunk, static_cast<std::size_t>(n));
    std::size_t pos;
    while ((pos = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, pos);
      buffer.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      if (!send_all(client.get(), session.handle(line) + "\n")) return;
    }
  }
}

}  // namespace echonav
