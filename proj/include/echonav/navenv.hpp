#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "echonav/audio.hpp"
#include "echonav/grid.hpp"
#include "echonav/random.hpp"
#include "echonav/view.hpp"

namespace echonav {

class SsirReader;

enum class Task { PointGoal, AudioGoal, AudioPointGoal };
enum class Action { MoveForward, TurnLeft, TurnRight, Stop };
enum class VisualMode { Blind, Rgb, Depth };

std::string to_string(Task t);
std::string to_string(Action a);
std::string to_string(VisualMode m);
Task parse_task(const std::string& s);
Action parse_action(const std::string& s);
VisualMode parse_visual_mode(const std::string& s);

inline bool task_has_audio(Task t) { return t != Task::PointGoal; }
inline bool task_has_gps(Task t) { return t != Task::AudioGoal; }

inline constexpr int kHorizon = 500;
inline constexpr double kStepPenalty = -0.01;
inline constexpr double kSuccessReward = 10.0;
inline constexpr double kMinEpisodeGeodesic = 4.0;
inline constexpr double kMinGeodesicRatio = 1.1;

/// Heading index: 0 = +x, 1 = +y, 2 = -x, 3 = -y (TurnLeft increments).
inline double heading_angle(int heading) { return heading * 1.5707963267948966; }

struct Episode {
  std::string id;
  std::string scene_id;
  std::uint32_t start_node = 0;
  int start_heading = 0;
  std::uint32_t goal_node = 0;
  std::optional<std::string> waveform_id;  // absent for PointGoal
  Task task = Task::AudioGoal;
  bool operator==(const Episode&) const = default;
};

std::string episode_to_json(const Episode& e);
Episode parse_episode(const std::string& json_line);
void save_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path);
std::vector<Episode> load_episodes(const std::filesystem::path& path);

struct EnvConfig {
  double gps_noise_sigma = 0.0;
  std::optional<double> mic_snr_db;
  /// Audibility threshold relative to the direct-path energy at 1 m.
  double audibility_threshold_db = -60.0;
  VisualMode visual_mode = VisualMode::Depth;
  bool intensity_only = false;
  /// When false, reset/step skip audio and visual rendering (metrics-only rollouts).
  bool render_observations = true;
  int view_resolution = kDefaultViewResolution;
  std::uint64_t seed = 0;
  void validate() const;
};

struct Observation {
  std::optional<Spectrogram> audio;
  std::optional<std::pair<double, double>> intensity;
  std::optional<ViewFrame> visual;
  std::optional<std::array<double, 2>> delta;  // (forward, left) in meters
};

struct StepInfo {
  double geodesic = 0.0;
  bool collision = false;
  int step = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  bool success = false;
  StepInfo info;
};

/// IR lookup keyed by (source node, listener node).
using RirLookup = std::function<AmbisonicIR(std::uint32_t source, std::uint32_t listener)>;
RirLookup container_lookup(std::shared_ptr<const SsirReader> reader);

/// Channel-0 energy of an IR.
double ir_energy(const AmbisonicIR& ir);
/// Energy threshold for the audibility filter: 10^(db/10) times the direct energy at 1 m.
double audibility_energy(double threshold_db);

/// Source sounds generated from the catalog on first use.
class WaveformBank {
 public:
  WaveformBank(std::vector<WaveformSpec> catalog, double sample_rate, double seconds = 1.0);
  const SourceWaveform& get(const std::string& id) const;
  const std::vector<WaveformSpec>& catalog() const { return catalog_; }
  std::vector<std::string> ids_in_split(const std::string& split) const;

 private:
  std::vector<WaveformSpec> catalog_;
  double sample_rate_;
  double seconds_;
  mutable std::map<std::string, SourceWaveform> cache_;
};

struct EpisodeRequest {
  std::string scene_id;
  std::size_t count = 100;
  std::uint64_t seed = 0;
  Task task = Task::AudioGoal;
  double audibility_threshold_db = -60.0;
  /// Waveforms are drawn from this split of the catalog (audio tasks only).
  std::string split = "train";
};

/// Uniform (start, heading, goal) samples among pairs in one component with geodesic >= 4 m,
/// geodesic / Euclidean >= 1.1 and, for audio tasks, IR(goal -> start) energy above the
/// audibility threshold. Throws InfeasibleError if no pair qualifies.
std::vector<Episode> generate_episodes(const NavGraph& graph, const RirLookup& rirs, const WaveformBank* waveforms,
                                       const EpisodeRequest& request);

/// Re-checks an episode against the filters; returns an empty string or the violated rule.
std::string episode_violation(const NavGraph& graph, const RirLookup& rirs, const Episode& e,
                              double audibility_threshold_db);

class NavEnv {
 public:
  /// `accel` may be null when the visual mode is blind or rendering is disabled; `waveforms` may
  /// be null for PointGoal-only use.
  NavEnv(const AccelStructure* accel, const NavGraph& graph, RirLookup rirs, const WaveformBank* waveforms,
         EnvConfig config);

  Observation reset(const Episode& episode);
  StepResult step(Action action);

  const Episode& episode() const { return episode_; }
  std::uint32_t node() const { return node_; }
  int heading() const { return heading_; }
  int steps() const { return steps_; }
  double path_length() const { return path_length_; }
  bool done() const { return done_; }
  bool active() const { return active_; }
  double geodesic_to_goal() const;
  const NavGraph& graph() const { return graph_; }
  const EnvConfig& config() const { return config_; }

 private:
  Observation observe();

  const AccelStructure* accel_;
  const NavGraph& graph_;
  RirLookup rirs_;
  const WaveformBank* waveforms_;
  EnvConfig config_;
  Episode episode_;
  std::uint32_t node_ = 0;
  int heading_ = 0;
  int steps_ = 0;
  double path_length_ = 0.0;
  bool done_ = false;
  bool active_ = false;
  Rng gps_rng_{0};
};

struct EpisodeResult {
  std::string episode_id;
  bool success = false;
  int steps = 0;
  double path_length = 0.0;
  double shortest_length = 0.0;
  double spl_term = 0.0;
};

/// Mean of S * l / max(p, l). Throws ValidationError for shortest_length <= 0.
double spl(const std::vector<EpisodeResult>& results);
double spl_term(bool success, double path_length, double shortest_length);

enum class Baseline { Random, Forward, GoalFollower };
std::string to_string(Baseline b);
Baseline parse_baseline(const std::string& s);

struct BaselineReport {
  std::vector<EpisodeResult> results;
  double spl = 0.0;
  double success_rate = 0.0;
};

/// Rolls out a non-learning policy with the oracle-stop rule (Stop exactly when at the goal).
BaselineReport run_baseline(NavEnv& env, const std::vector<Episode>& episodes, Baseline policy, std::uint64_t seed);

std::string results_csv(const std::vector<EpisodeResult>& results);

}  // namespace echonav
