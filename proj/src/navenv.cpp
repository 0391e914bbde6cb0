#include "echonav/navenv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "echonav/errors.hpp"
#include "echonav/storage.hpp"

namespace echonav {

namespace {

/// FNV-1a, so id-derived seeds are stable across platforms and standard libraries.
std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double ground_distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

std::string to_string(Task t) {
  switch (t) {
    case Task::PointGoal: return "PointGoal";
    case Task::AudioGoal: return "AudioGoal";
    case Task::AudioPointGoal: return "AudioPointGoal";
  }
  return "?";
}

std::string to_string(Action a) {
  switch (a) {
    case Action::MoveForward: return "MoveForward";
    case Action::TurnLeft: return "TurnLeft";
    case Action::TurnRight: return "TurnRight";
    case Action::Stop: return "Stop";
  }
  return "?";
}

std::string to_string(VisualMode m) {
  switch (m) {
    case VisualMode::Blind: return "blind";
    case VisualMode::Rgb: return "rgb";
    case VisualMode::Depth: return "depth";
  }
  return "?";
}

std::string to_string(Baseline b) {
  switch (b) {
    case Baseline::Random: return "random";
    case Baseline::Forward: return "forward";
    case Baseline::GoalFollower: return "goal_follower";
  }
  return "?";
}

Task parse_task(const std::string& s) {
  for (Task t : {Task::PointGoal, Task::AudioGoal, Task::AudioPointGoal})
    if (to_string(t) == s) return t;
  throw ParseError("unknown task: " + s);
}

Action parse_action(const std::string& s) {
  for (Action a : {Action::MoveForward, Action::TurnLeft, Action::TurnRight, Action::Stop})
    if (to_string(a) == s) return a;
  throw ParseError("unknown action: " + s);
}

VisualMode parse_visual_mode(const std::string& s) {
  for (VisualMode m : {VisualMode::Blind, VisualMode::Rgb, VisualMode::Depth})
    if (to_string(m) == s) return m;
  throw ParseError("unknown visual mode: " + s);
}

Baseline parse_baseline(const std::string& s) {
  for (Baseline b : {Baseline::Random, Baseline::Forward, Baseline::GoalFollower})
    if (to_string(b) == s) return b;
  throw ParseError("unknown baseline: " + s);
}

// ---- episodes

std::string episode_to_json(const Episode& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["scene_id"] = e.scene_id;
  j["start_node"] = e.start_node;
  j["start_heading"] = e.start_heading;
  j["goal_node"] = e.goal_node;
  if (e.waveform_id) j["waveform_id"] = *e.waveform_id;
  j["task"] = to_string(e.task);
  return j.dump();
}

Episode parse_episode(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    Episode e;
    e.id = j.at("id").get<std::string>();
    e.scene_id = j.value("scene_id", std::string());
    e.start_node = j.at("start_node").get<std::uint32_t>();
    e.start_heading = j.at("start_heading").get<int>();
    e.goal_node = j.at("goal_node").get<std::uint32_t>();
    if (j.contains("waveform_id") && !j["waveform_id"].is_null()) e.waveform_id = j["waveform_id"].get<std::string>();
    e.task = parse_task(j.at("task").get<std::string>());
    if (e.start_heading < 0 || e.start_heading > 3) throw ParseError("start_heading must be 0..3");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError(std::string("episode record: ") + ex.what());
  }
}

void save_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StorageError("cannot write " + path.string());
  for (const Episode& e : episodes) os << episode_to_json(e) << '\n';
  if (!os) throw StorageError("write failed for " + path.string());
}

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  std::vector<Episode> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_episode(line));
    } catch (const ParseError& ex) {
      throw ParseError(path.string() + ":" + std::to_string(number) + ": " + ex.what());
    }
  }
  return out;
}

void EnvConfig::validate() const {
  if (!(gps_noise_sigma >= 0.0) || !std::isfinite(gps_noise_sigma))
    throw ValidationError("gps_noise_sigma must be >= 0");
  if (mic_snr_db && std::isnan(*mic_snr_db)) throw ValidationError("mic_snr_db must not be NaN");
  if (view_resolution < 1) throw ValidationError("view_resolution must be >= 1");
}

RirLookup container_lookup(std::shared_ptr<const SsirReader> reader) {
  return [reader](std::uint32_t s, std::uint32_t l) { return reader->read(s, l); };
}

double ir_energy(const AmbisonicIR& ir) {
  double e = 0.0;
  for (std::size_t n = 0; n < ir.length(); ++n) e += static_cast<double>(ir.at(0, n)) * ir.at(0, n);
  return e;
}

double audibility_energy(double threshold_db) { return std::pow(10.0, threshold_db / 10.0) / (4.0 * kPi); }

WaveformBank::WaveformBank(std::vector<WaveformSpec> catalog, double sample_rate, double seconds)
    : catalog_(std::move(catalog)), sample_rate_(sample_rate), seconds_(seconds) {}

const SourceWaveform& WaveformBank::get(const std::string& id) const {
  if (auto it = cache_.find(id); it != cache_.end()) return it->second;
  for (const WaveformSpec& s : catalog_)
    if (s.id == id) return cache_.emplace(id, generate_waveform(s, sample_rate_, seconds_)).first->second;
  throw NotFoundError("unknown waveform id: " + id);
}

std::vector<std::string> WaveformBank::ids_in_split(const std::string& split) const {
  std::vector<std::string> out;
  for (const WaveformSpec& s : catalog_)
    if (s.split == split) out.push_back(s.id);
  return out;
}

// ---- episode generation

namespace {

bool geometric_ok(const NavGraph& graph, std::uint32_t s, std::uint32_t g) {
  if (s == g) return false;
  const double geo = geodesic_distance(graph, s, g);
  if (!std::isfinite(geo) || geo < kMinEpisodeGeodesic - 1e-9) return false;
  const double euclid = ground_distance(graph.node(s), graph.node(g));
  return geo / euclid >= kMinGeodesicRatio;
}

}  // namespace

std::string episode_violation(const NavGraph& graph, const RirLookup& rirs, const Episode& e,
                              double audibility_threshold_db) {
  if (e.start_node >= graph.node_count() || e.goal_node >= graph.node_count()) return "node out of range";
  if (e.start_node == e.goal_node) return "start equals goal";
  const double geo = geodesic_distance(graph, e.start_node, e.goal_node);
  if (!std::isfinite(geo)) return "start and goal disconnected";
  if (geo < kMinEpisodeGeodesic - 1e-9) return "geodesic below 4 m";
  if (geo / ground_distance(graph.node(e.start_node), graph.node(e.goal_node)) < kMinGeodesicRatio)
    return "geodesic/euclidean ratio below 1.1";
  if (task_has_audio(e.task)) {
    if (!e.waveform_id) return "audio task without waveform";
    if (!rirs) return "no IRs to check audibility";
    if (ir_energy(rirs(e.goal_node, e.start_node)) < audibility_energy(audibility_threshold_db))
      return "inaudible at start";
  }
  return {};
}

std::vector<Episode> generate_episodes(const NavGraph& graph, const RirLookup& rirs, const WaveformBank* waveforms,
                                       const EpisodeRequest& request) {
  const bool audio = task_has_audio(request.task);
  if (audio && !rirs) throw ValidationError("generate_episodes: audio tasks need IRs");
  if (audio && !waveforms) throw ValidationError("generate_episodes: audio tasks need waveforms");
  std::vector<std::string> sounds;
  if (audio) {
    sounds = waveforms->ids_in_split(request.split);
    if (sounds.empty()) throw InfeasibleError("no waveforms in split " + request.split);
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> candidates;
  for (std::uint32_t s = 0; s < graph.node_count(); ++s)
    for (std::uint32_t g = 0; g < graph.node_count(); ++g)
      if (geometric_ok(graph, s, g)) candidates.emplace_back(s, g);
  if (candidates.empty())
    throw InfeasibleError("no start/goal pair has geodesic >= 4 m and geodesic/euclidean >= 1.1");

  // Rejection sampling over the geometric candidates keeps the draw uniform over fully
  // qualifying pairs; audibility is evaluated lazily and memoized.
  const double threshold = audibility_energy(request.audibility_threshold_db);
  std::vector<signed char> audible(candidates.size(), audio ? -1 : 1);
  std::size_t rejected = 0;
  Rng rng(derive_seed(request.seed, {0x65706973}));
  std::vector<Episode> out;
  while (out.size() < request.count) {
    const std::size_t k = rng.below(candidates.size());
    const auto [s, g] = candidates[k];
    if (audible[k] < 0) {
      audible[k] = ir_energy(rirs(g, s)) >= threshold ? 1 : 0;
      if (!audible[k]) ++rejected;
    }
    if (!audible[k]) {
      if (rejected == candidates.size()) throw InfeasibleError("no start/goal pair is audible at the threshold");
      continue;
    }
    Episode e;
    char id[32];
    std::snprintf(id, sizeof id, "ep_%05zu", out.size());
    e.id = id;
    e.scene_id = request.scene_id;
    e.start_node = s;
    e.goal_node = g;
    e.start_heading = static_cast<int>(rng.below(4));
    e.task = request.task;
    if (audio) e.waveform_id = sounds[rng.below(sounds.size())];
    out.push_back(std::move(e));
  }
  return out;
}

// ---- environment

NavEnv::NavEnv(const AccelStructure* accel, const NavGraph& graph, RirLookup rirs, const WaveformBank* waveforms,
               EnvConfig config)
    : accel_(accel), graph_(graph), rirs_(std::move(rirs)), waveforms_(waveforms), config_(std::move(config)) {
  config_.validate();
  if (config_.render_observations && config_.visual_mode != VisualMode::Blind && accel_ == nullptr)
    throw ValidationError("NavEnv: visual observations need an acceleration structure");
}

double NavEnv::geodesic_to_goal() const { return geodesic_distance(graph_, node_, episode_.goal_node); }

Observation NavEnv::reset(const Episode& episode) {
  if (episode.start_node >= graph_.node_count() || episode.goal_node >= graph_.node_count())
    throw ValidationError("episode " + episode.id + " refers to nodes outside the graph");
  if (episode.start_node == episode.goal_node) throw ValidationError("episode " + episode.id + ": start equals goal");
  if (episode.start_heading < 0 || episode.start_heading > 3)
    throw ValidationError("episode " + episode.id + ": heading must be 0..3");
  if (task_has_audio(episode.task) && config_.render_observations) {
    if (!rirs_ || !waveforms_) throw ValidationError("episode " + episode.id + ": audio task without IRs/waveforms");
    if (!episode.waveform_id) throw ValidationError("episode " + episode.id + ": audio task without waveform id");
  }
  episode_ = episode;
  node_ = episode.start_node;
  heading_ = episode.start_heading;
  steps_ = 0;
  path_length_ = 0.0;
  done_ = false;
  active_ = true;
  gps_rng_ = Rng(derive_seed(config_.seed, {0x677073, stable_hash(episode.id)}));
  return observe();
}

Observation NavEnv::observe() {
  Observation obs;
  const Vec3& p = graph_.node(node_);
  const double theta = heading_angle(heading_);
  if (task_has_gps(episode_.task)) {
    const Vec3& g = graph_.node(episode_.goal_node);
    const double dx = g.x - p.x, dy = g.y - p.y;
    std::array<double, 2> delta{dx * std::cos(theta) + dy * std::sin(theta), -dx * std::sin(theta) + dy * std::cos(theta)};
    if (config_.gps_noise_sigma > 0.0)
      for (double& v : delta) v += config_.gps_noise_sigma * gps_rng_.normal();
    obs.delta = delta;
  }
  if (!config_.render_observations) return obs;
  if (task_has_audio(episode_.task)) {
    const AmbisonicIR ir = rirs_(episode_.goal_node, node_);
    const SourceWaveform& src = waveforms_->get(*episode_.waveform_id);
    StereoAudio audio = render_audio(decode_binaural(ir, theta), src, 1000.0);
    if (config_.mic_snr_db)
      audio = add_mic_noise(audio, *config_.mic_snr_db,
                            derive_seed(config_.seed, {0x6d6963, stable_hash(episode_.id),
                                                       static_cast<std::uint64_t>(steps_)}));
    if (config_.intensity_only)
      obs.intensity = rms_intensity(audio);
    else
      obs.audio = spectrogram(audio);
  }
  if (config_.visual_mode != VisualMode::Blind)
    obs.visual = render_view(*accel_, Pose{p, theta}, config_.view_resolution);
  return obs;
}

StepResult NavEnv::step(Action action) {
  if (!active_) throw ValidationError("step() before reset()");
  if (done_) throw ValidationError("step() after the episode is done");
  StepResult r;
  const double before = geodesic_to_goal();
  r.reward = kStepPenalty;
  ++steps_;
  switch (action) {
    case Action::TurnLeft: heading_ = (heading_ + 1) % 4; break;
    case Action::TurnRight: heading_ = (heading_ + 3) % 4; break;
    case Action::MoveForward: {
      const double theta = heading_angle(heading_);
      const auto next = graph_.neighbor_toward(node_, std::cos(theta), std::sin(theta));
      if (next) {
        node_ = *next;
        path_length_ += graph_.resolution();
      } else {
        r.info.collision = true;
      }
      break;
    }
    case Action::Stop:
      done_ = true;
      r.success = node_ == episode_.goal_node;
      if (r.success) r.reward += kSuccessReward;
      break;
  }
  const double after = geodesic_to_goal();
  r.reward += (before - after) / graph_.resolution();
  if (steps_ >= kHorizon) done_ = true;
  r.done = done_;
  r.info.geodesic = after;
  r.info.step = steps_;
  r.observation = observe();
  return r;
}

// ---- metrics and baselines

double spl_term(bool success, double path_length, double shortest_length) {
  if (!(shortest_length > 0.0)) throw ValidationError("spl: shortest_length must be > 0");
  if (!success) return 0.0;
  return shortest_length / std::max(path_length, shortest_length);
}

double spl(const std::vector<EpisodeResult>& results) {
  if (results.empty()) return 0.0;
  double acc = 0.0;
  for (const EpisodeResult& r : results) acc += spl_term(r.success, r.path_length, r.shortest_length);
  return acc / static_cast<double>(results.size());
}

namespace {

Action goal_follower_action(const NavEnv& env) {
  const Vec3& p = env.graph().node(env.node());
  const Vec3& g = env.graph().node(env.episode().goal_node);
  const double dx = g.x - p.x, dy = g.y - p.y;
  int best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < 4; ++h) {
    const double d = dx * std::cos(heading_angle(h)) + dy * std::sin(heading_angle(h));
    if (d > best_dot + 1e-12) {
      best_dot = d;
      best = h;
    }
  }
  if (best == env.heading()) return Action::MoveForward;
  return best == (env.heading() + 1) % 4 ? Action::TurnLeft : Action::TurnRight;
}

}  // namespace

BaselineReport run_baseline(NavEnv& env, const std::vector<Episode>& episodes, Baseline policy, std::uint64_t seed) {
  BaselineReport report;
  std::size_t successes = 0;
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    const Episode& ep = episodes[i];
    env.reset(ep);
    Rng rng(derive_seed(seed, {0x72616e64, i}));
    bool collided = false;
    StepResult last;
    while (!env.done()) {
      Action a;
      if (env.node() == ep.goal_node) {
        a = Action::Stop;
      } else if (policy == Baseline::Random) {
        static constexpr Action kMoves[] = {Action::MoveForward, Action::TurnLeft, Action::TurnRight};
        a = kMoves[rng.below(3)];
      } else if (policy == Baseline::Forward) {
        a = collided ? Action::TurnRight : Action::MoveForward;
      } else {
        a = goal_follower_action(env);
      }
      last = env.step(a);
      collided = last.info.collision;
    }
    EpisodeResult r;
    r.episode_id = ep.id;
    r.success = last.success;
    r.steps = env.steps();
    r.path_length = env.path_length();
    r.shortest_length = geodesic_distance(env.graph(), ep.start_node, ep.goal_node);
    r.spl_term = spl_term(r.success, r.path_length, r.shortest_length);
    successes += r.success;
    report.results.push_back(std::move(r));
  }
  report.spl = spl(report.results);
  report.success_rate = episodes.empty() ? 0.0 : static_cast<double>(successes) / episodes.size();
  return report;
}

std::string results_csv(const std::vector<EpisodeResult>& results) {
  std::ostringstream os;
  os << "episode_id,success,steps,path_length,shortest_length,spl_term\n";
  for (const EpisodeResult& r : results)
    os << r.episode_id << ',' << (r.success ? 1 : 0) << ',' << r.steps << ',' << format_double(r.path_length) << ','
       << format_double(r.shortest_length) << ',' << format_double(r.spl_term) << '\n';
  return os.str();
}

}  // namespace echonav
