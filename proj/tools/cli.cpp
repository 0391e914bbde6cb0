#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "echonav/accel.hpp"
#include "echonav/acoustics.hpp"
#include "echonav/audio.hpp"
#include "echonav/errors.hpp"
#include "echonav/grid.hpp"
#include "echonav/materials.hpp"
#include "echonav/navenv.hpp"
#include "echonav/precompute.hpp"
#include "echonav/scene.hpp"
#include "echonav/server.hpp"
#include "echonav/storage.hpp"

namespace echonav {

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string params;
  int threads = 0;
  bool verbose = false;
};

/// Scene files, or built-in fixtures: "fixture:two_room", "fixture:corridor:<n>",
/// "fixture:shoebox:<x>x<y>x<z>".
Scene load_scene_arg(const std::string& arg) {
  const std::string prefix = "fixture:";
  if (arg.rfind(prefix, 0) != 0) return load_scene(arg);
  const std::string name = arg.substr(prefix.size());
  if (name == "two_room") return fixtures::two_room();
  if (name.rfind("corridor:", 0) == 0) return fixtures::corridor(std::stoi(name.substr(9)));
  if (name.rfind("shoebox:", 0) == 0) {
    Vec3 d;
    if (std::sscanf(name.c_str() + 8, "%lfx%lfx%lf", &d.x, &d.y, &d.z) != 3)
      throw ParseError("shoebox fixture needs dimensions like shoebox:10x8x3");
    return generate_shoebox(d);
  }
  throw ParseError("unknown fixture: " + name);
}

SimParams load_params(const Globals& g) {
  SimParams p = g.params.empty() ? SimParams{} : load_sim_params(g.params);
  // An explicit --seed wins over the file's rng_seed.
  if (g.seed_given || g.params.empty()) p.rng_seed = g.seed;
  p.validate();
  return p;
}

std::filesystem::path sidecar_graph(const std::string& container) { return container + ".graph.json"; }

NavGraph load_graph_arg(const std::string& graph, const std::string& container) {
  if (!graph.empty()) return load_graph(graph);
  if (!container.empty() && std::filesystem::exists(sidecar_graph(container)))
    return load_graph(sidecar_graph(container));
  throw ValidationError("no --graph given and no graph stored beside the container");
}

std::vector<WaveformSpec> load_catalog(const std::string& manifest) {
  if (manifest.empty()) return waveform_catalog(0);
  std::ifstream in(manifest);
  if (!in) throw NotFoundError("cannot open " + manifest);
  return parse_waveform_manifest(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw StorageError("cannot write " + path);
  os << text;
  if (!os) throw StorageError("write failed for " + path);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Acoustic simulation and audio-visual navigation toolkit"};
  app.require_subcommand(1);
  Globals g;
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed for every stochastic step");
  app.add_option("--params", g.params, "SimParams JSON file");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  // grid
  auto* grid = app.add_subcommand("grid", "Place and prune nodes, build the navigation graph");
  std::string scene_arg, graph_out;
  PruneOptions prune_opts;
  grid->add_option("--scene", scene_arg, "Scene JSON or fixture:<name>")->required();
  grid->add_option("--resolution", prune_opts.resolution, "Lattice spacing (m)");
  grid->add_option("--height", prune_opts.height, "Node height above the floor (m)");
  grid->add_option("--rays", prune_opts.rays, "Closedness rays per candidate");
  grid->add_option("--bounces", prune_opts.bounces, "Closedness bounces per ray");
  grid->add_option("--c-min", prune_opts.c_min, "Minimum closedness");
  grid->add_option("--d-min", prune_opts.d_min, "Minimum clearance (m)");
  grid->add_option("--out", graph_out, "Graph JSON output")->required();

  // rir
  auto* rir = app.add_subcommand("rir", "Precompute the IR of every node pair into an SSIR container");
  std::string graph_arg, materials_arg, rir_out;
  rir->add_option("--scene", scene_arg, "Scene JSON or fixture:<name>")->required();
  rir->add_option("--graph", graph_arg, "Graph JSON")->required();
  rir->add_option("--materials", materials_arg, "Material database JSON");
  rir->add_option("--out", rir_out, "SSIR container (resumed if it exists)")->required();

  // render
  auto* render = app.add_subcommand("render", "Render binaural audio for a pose to WAV");
  std::string rir_arg, episodes_arg, episode_id, waveform_id, manifest_arg, wav_out;
  std::optional<std::uint32_t> source_node, listener_node;
  int heading = 0;
  render->add_option("--rir", rir_arg, "SSIR container")->required();
  render->add_option("--episodes", episodes_arg, "Episode JSON-lines file");
  render->add_option("--episode", episode_id, "Episode id (goal = source, start = listener)");
  render->add_option("--source", source_node, "Source node (instead of an episode)");
  render->add_option("--listener", listener_node, "Listener node (instead of an episode)");
  render->add_option("--heading", heading, "Heading index 0..3 (0 = +x, counter-clockwise)");
  render->add_option("--waveform", waveform_id, "Waveform id (defaults to the episode's)");
  render->add_option("--manifest", manifest_arg, "Waveform manifest JSON");
  render->add_option("--out", wav_out, "WAV output")->required();

  // episodes
  auto* episodes = app.add_subcommand("episodes", "Generate filtered navigation episodes");
  EpisodeRequest request;
  std::string task_arg = "AudioGoal", episodes_out;
  episodes->add_option("--graph", graph_arg, "Graph JSON (defaults to the one stored beside --rir)");
  episodes->add_option("--rir", rir_arg, "SSIR container (needed for audio tasks)");
  episodes->add_option("--count", request.count, "Number of episodes");
  episodes->add_option("--task", task_arg, "PointGoal | AudioGoal | AudioPointGoal");
  episodes->add_option("--scene-id", request.scene_id, "Scene id recorded in each episode");
  episodes->add_option("--split", request.split, "Waveform split: train | val | test");
  episodes->add_option("--threshold-db", request.audibility_threshold_db, "Audibility threshold (dB re 1 m direct)");
  episodes->add_option("--manifest", manifest_arg, "Waveform manifest JSON");
  episodes->add_option("--out", episodes_out, "Episode JSON-lines output")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Run a baseline policy and report SPL");
  std::string baseline_arg, csv_out;
  eval->add_option("--baseline", baseline_arg, "random | forward | goal_follower")->required();
  eval->add_option("--episodes", episodes_arg, "Episode JSON-lines file")->required();
  eval->add_option("--rir", rir_arg, "SSIR container");
  eval->add_option("--graph", graph_arg, "Graph JSON (defaults to the one stored beside --rir)");
  eval->add_option("--out", csv_out, "Results CSV (stdout if omitted)");

  // field
  auto* field = app.add_subcommand("field", "Per-node channel-0 energy for one source as CSV");
  std::uint32_t field_source = 0;
  std::string field_out;
  field->add_option("--rir", rir_arg, "SSIR container")->required();
  field->add_option("--graph", graph_arg, "Graph JSON (defaults to the one stored beside --rir)");
  field->add_option("--source", field_source, "Source node")->required();
  field->add_option("--out", field_out, "CSV output (stdout if omitted)");

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the environment protocol to one client");
  EnvConfig env_config;
  std::string visual_arg = "depth";
  int port = 0;
  bool use_stdio = false;
  std::optional<double> mic_snr;
  serve->add_option("--rir", rir_arg, "SSIR container")->required();
  serve->add_option("--graph", graph_arg, "Graph JSON (defaults to the one stored beside --rir)");
  serve->add_option("--episodes", episodes_arg, "Episode JSON-lines file")->required();
  serve->add_option("--scene", scene_arg, "Scene for visual observations (blind without)");
  serve->add_option("--manifest", manifest_arg, "Waveform manifest JSON");
  serve->add_option("--visual", visual_arg, "blind | rgb | depth");
  serve->add_flag("--intensity-only", env_config.intensity_only, "Send (L, R) RMS instead of spectrograms");
  serve->add_option("--gps-noise", env_config.gps_noise_sigma, "Displacement noise sigma (m)");
  serve->add_option("--mic-snr", mic_snr, "Microphone SNR (dB)");
  serve->add_option("--view-resolution", env_config.view_resolution, "Square view size in pixels");
  auto* port_opt = serve->add_option("--port", port, "TCP port on 127.0.0.1");
  auto* stdio_opt = serve->add_flag("--stdio", use_stdio, "Speak the protocol on stdin/stdout");
  port_opt->excludes(stdio_opt);

  // waveforms
  auto* waves = app.add_subcommand("waveforms", "Write the synthetic source manifest (and optionally WAVs)");
  std::string waves_dir;
  double waves_rate = 44100.0;
  bool waves_render = false;
  waves->add_option("--out-dir", waves_dir, "Output directory")->required();
  waves->add_option("--sample-rate", waves_rate, "Sample rate for rendered WAVs");
  waves->add_flag("--render", waves_render, "Also render every variant to <id>.wav");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  g.seed_given = seed_opt->count() > 0;
  try {
    if (grid->parsed()) {
      const Scene scene = load_scene_arg(scene_arg);
      const AccelStructure accel(scene);
      prune_opts.seed = g.seed;
      prune_opts.threads = g.threads;
      const NodeGrid nodes = prune(place_candidates(scene, prune_opts.resolution, prune_opts.height), accel, prune_opts);
      const NavGraph graph = build_nav_graph(nodes, accel);
      save_graph(graph, graph_out);
      out << "nodes " << graph.node_count() << " edges " << graph.edges().size() << '\n';
    } else if (rir->parsed()) {
      const Scene scene = load_scene_arg(scene_arg);
      const AccelStructure accel(scene);
      const MaterialDb db = materials_arg.empty() ? MaterialDb::defaults() : load_material_db(materials_arg);
      const AcousticScene ascene(accel, db);
      const NavGraph graph = load_graph(graph_arg);
      const SimParams params = load_params(g);
      PrecomputeOptions opts;
      opts.threads = g.threads;
      if (g.verbose)
        opts.progress = [&](std::size_t done, std::size_t total) {
          err << "\rrir: " << done << "/" << total << " pairs" << (done == total ? "\n" : "") << std::flush;
        };
      const PrecomputeStats stats = precompute_grid(ascene, graph, params, rir_out, opts);
      save_graph(graph, sidecar_graph(rir_out));
      out << "pairs " << stats.computed + stats.skipped << " computed " << stats.computed << " resumed "
          << stats.skipped << '\n';
    } else if (render->parsed()) {
      const SsirReader reader(rir_arg);
      std::uint32_t s, l;
      int h = heading;
      std::string wave = waveform_id;
      if (!episode_id.empty()) {
        if (episodes_arg.empty()) throw ValidationError("--episode needs --episodes");
        std::optional<Episode> found;
        for (const Episode& e : load_episodes(episodes_arg))
          if (e.id == episode_id) found = e;
        if (!found) throw NotFoundError("episode " + episode_id + " not in " + episodes_arg);
        s = found->goal_node;
        l = found->start_node;
        h = found->start_heading;
        if (wave.empty() && found->waveform_id) wave = *found->waveform_id;
      } else {
        if (!source_node || !listener_node) throw ValidationError("give --episode or both --source and --listener");
        s = *source_node;
        l = *listener_node;
      }
      if (wave.empty()) throw ValidationError("no waveform: pass --waveform");
      const WaveformBank bank(load_catalog(manifest_arg), reader.sample_rate());
      const AmbisonicIR ir = reader.read(s, l);
      const StereoAudio audio = render_audio(decode_binaural(ir, heading_angle(h)), bank.get(wave), 1000.0);
      write_wav(wav_out, audio);
      const auto [rl, rr] = rms_intensity(audio);
      out << "wrote " << wav_out << " rms_left " << rl << " rms_right " << rr << '\n';
    } else if (episodes->parsed()) {
      request.task = parse_task(task_arg);
      request.seed = g.seed;
      const NavGraph graph = load_graph_arg(graph_arg, rir_arg);
      std::shared_ptr<const SsirReader> reader;
      RirLookup lookup;
      if (!rir_arg.empty()) {
        reader = std::make_shared<const SsirReader>(rir_arg);
        lookup = container_lookup(reader);
      }
      const WaveformBank bank(load_catalog(manifest_arg), reader ? reader->sample_rate() : 44100.0);
      const auto eps = generate_episodes(graph, lookup, &bank, request);
      save_episodes(eps, episodes_out);
      out << "episodes " << eps.size() << '\n';
    } else if (eval->parsed()) {
      const NavGraph graph = load_graph_arg(graph_arg, rir_arg);
      EnvConfig cfg;
      cfg.render_observations = false;
      NavEnv env(nullptr, graph, {}, nullptr, cfg);
      const auto eps = load_episodes(episodes_arg);
      const BaselineReport report = run_baseline(env, eps, parse_baseline(baseline_arg), g.seed);
      const std::string csv = results_csv(report.results);
      if (csv_out.empty())
        out << csv;
      else
        write_text(csv_out, csv);
      (csv_out.empty() ? err : out) << "baseline " << baseline_arg << " episodes " << eps.size() << " success "
                                     << report.success_rate << " spl " << report.spl << '\n';
    } else if (field->parsed()) {
      const SsirReader reader(rir_arg);
      const NavGraph graph = load_graph_arg(graph_arg, rir_arg);
      if (field_source >= graph.node_count()) throw ValidationError("--source outside the graph");
      const auto& hops = graph.hops_from(field_source);
      std::ostringstream csv;
      csv << "node,x,y,hops,energy\n";
      char line[160];
      for (std::uint32_t n = 0; n < graph.node_count(); ++n) {
        const Vec3& p = graph.node(n);
        std::snprintf(line, sizeof line, "%u,%.6g,%.6g,%d,%.9g\n", n, p.x, p.y, hops[n],
                      ir_energy(reader.read(field_source, n)));
        csv << line;
      }
      if (field_out.empty())
        out << csv.str();
      else
        write_text(field_out, csv.str());
    } else if (serve->parsed()) {
      auto reader = std::make_shared<const SsirReader>(rir_arg);
      const NavGraph graph = load_graph_arg(graph_arg, rir_arg);
      if (reader->node_count() != graph.node_count())
        throw ValidationError("container node count does not match the graph");
      std::optional<Scene> scene;
      std::optional<AccelStructure> accel;
      env_config.visual_mode = parse_visual_mode(visual_arg);
      if (!scene_arg.empty()) {
        scene = load_scene_arg(scene_arg);
        accel.emplace(*scene);
      } else {
        env_config.visual_mode = VisualMode::Blind;
      }
      env_config.mic_snr_db = mic_snr;
      env_config.seed = g.seed;
      const WaveformBank bank(load_catalog(manifest_arg), reader->sample_rate());
      auto eps = load_episodes(episodes_arg);
      for (const Episode& e : eps) {
        if (e.start_node >= graph.node_count() || e.goal_node >= graph.node_count())
          throw ValidationError("episode " + e.id + " does not fit the graph");
        if (e.waveform_id) bank.get(*e.waveform_id);
      }
      NavEnv env(accel ? &*accel : nullptr, graph, container_lookup(reader), &bank, env_config);
      Session session(env, std::move(eps), {{"sample_rate", reader->sample_rate()}});
      if (use_stdio) {
        serve_stream(session, std::cin, out);
      } else {
        serve_tcp(session, port, [&](int bound) { err << "listening on 127.0.0.1:" << bound << std::endl; });
      }
    } else if (waves->parsed()) {
      std::filesystem::create_directories(waves_dir);
      const auto catalog = waveform_catalog(g.seed);
      write_text((std::filesystem::path(waves_dir) / "manifest.json").string(), waveform_manifest_json(catalog));
      if (waves_render) {
        for (const WaveformSpec& spec : catalog) {
          const SourceWaveform w = generate_waveform(spec, waves_rate);
          write_wav(std::filesystem::path(waves_dir) / (spec.id + ".wav"), StereoAudio{w.sample_rate, w.samples, w.samples});
        }
      }
      out << "waveforms " << catalog.size() << '\n';
    }
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace echonav
