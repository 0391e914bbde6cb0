#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "echonav/navenv.hpp"

namespace echonav {

/// {"shape": [...], "dtype": "f32le", "data": base64 of little-endian float32}.
nlohmann::json encode_tensor(const std::vector<int>& shape, const std::vector<float>& values);
std::vector<float> decode_tensor(const nlohmann::json& tensor, std::vector<int>* shape = nullptr);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

nlohmann::json observation_to_json(const Observation& obs, VisualMode mode);

/// One client's protocol state. Messages are single-line JSON objects:
///   {"cmd":"reset","episode":"<id>"} -> {"ok":true,"obs":{...}}
///   {"cmd":"step","action":"MoveForward"} -> {"ok":true,"obs":{...},"reward":r,"done":b,"success":b,"info":{...}}
///   {"cmd":"info"} -> {"ok":true,"config":{...}}
/// Failures reply {"ok":false,"error":"..."} and leave the session usable.
class Session {
 public:
  Session(NavEnv& env, std::vector<Episode> episodes, nlohmann::json static_config = nlohmann::json::object());

  /// Handles one message and returns the reply (without trailing newline).
  std::string handle(const std::string& line);

 private:
  nlohmann::json dispatch(const nlohmann::json& msg);

  NavEnv& env_;
  std::map<std::string, Episode> episodes_;
  nlohmann::json static_config_;
};

/// Newline-delimited request/reply loop until end of input.
void serve_stream(Session& session, std::istream& in, std::ostream& out);

/// Listens on 127.0.0.1:port, serves a single client until it disconnects, then returns.
/// `on_listening` receives the bound port (useful with port 0).
void serve_tcp(Session& session, int port, const std::function<void(int)>& on_listening = {});

}  // namespace echonav
