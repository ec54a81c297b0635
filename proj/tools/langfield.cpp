// SPDX-License-Identifier: Apache-2.0
//
// langfield: one binary, subcommand style.
//   synth, camera, render, query, eval, synth-frames, collect, gradcheck, toy, ksweep, serve
// Exit codes: 0 success, 1 a check or gate failed, 2 bad input or runtime error.
#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include "langfield/binary_io.hpp"
#include "langfield/error.hpp"
#include "langfield/eval.hpp"
#include "langfield/gradcheck.hpp"
#include "langfield/pipeline.hpp"
#include "langfield/png_io.hpp"
#include "langfield/raster.hpp"
#include "langfield/scene.hpp"
#include "langfield/service.hpp"
#include "langfield/toy.hpp"

// after Eigen: resolv.h defines a _res macro
#include <httplib.h>

namespace fs = std::filesystem;
using namespace langfield;

namespace {

constexpr int kCheckFailed = 1;
constexpr int kError = 2;

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(fmt::format("cannot create directory {}: {}", dir.string(), ec.message()));
}

Camera load_camera(const fs::path& path) {
  if (!fs::exists(path)) throw Error(fmt::format("camera file not found: {}", path.string()));
  return camera_from_json(read_text(path));
}

std::vector<float> read_embedding_file(const fs::path& path) {
  std::string text = read_text(path);
  std::replace_if(text.begin(), text.end(), [](char c) { return c == '[' || c == ']' || c == ','; }, ' ');
  std::istringstream in(text);
  std::vector<float> out;
  double v = 0;
  while (in >> v) out.push_back(static_cast<float>(v));
  if (!in.eof()) throw FormatError(fmt::format("{}: embedding file must hold numbers only", path.string()));
  if (out.empty()) throw FormatError(fmt::format("{}: embedding file is empty", path.string()));
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

// ---- synth / camera --------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t n = 1000;
  int k = 4, c = 16, regions = 4;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const Scene scene = make_synthetic_scene(a.seed, a.n, a.k, a.c, a.regions);
  save_scene(scene, a.out);
  const auto report = validate_scene(scene);
  fmt::print("wrote {} ({} primitives, K={}, C={}, {} regions)\n", a.out, scene.primitives.size(), a.k, a.c,
             a.regions);
  if (report.empty()) {
    fmt::print("validation: clean\n");
    return 0;
  }
  for (const auto& issue : report) fmt::print("validation: primitive {}: {}\n", issue.primitive, issue.invariant);
  return kCheckFailed;
}

struct CameraArgs {
  int width = 64, height = 64;
  double azimuth = 0, elevation = 0, distance = 3.0;
  std::string out;
};

int cmd_camera(const CameraArgs& a) {
  const auto json = camera_to_json(synthetic_camera(a.width, a.height, a.azimuth, a.elevation, a.distance));
  if (a.out.empty()) {
    fmt::print("{}\n", json);
  } else {
    write_text(a.out, json + "\n");
  }
  return 0;
}

// ---- render / query --------------------------------------------------------------------------

struct RenderArgs {
  std::string scene, camera, out_dir = ".";
  int threads = 0, tile = 16;
  bool weights = false, features = false, labels = false, check = false;
  double tolerance = 1e-5;
  double alpha_floor = kDefaultAlphaFloor;
};

// argmax of the weight maps where alpha clears the floor; -1 elsewhere
LabelImage ownership_labels(const RenderOutput<float>& out, double floor) {
  LabelImage labels(out.alpha.width, out.alpha.height, 1, -1);
  const auto& w = out.weight_maps;
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    if (out.alpha.data[i] < floor || w.channels == 0) continue;
    const auto px = w.pixel(i);
    labels.data[i] = static_cast<int>(std::max_element(px.begin(), px.end()) - px.begin());
  }
  return labels;
}

int cmd_render(const RenderArgs& a) {
  const Scene scene = load_scene(a.scene);
  const Camera camera = load_camera(a.camera);
  const RenderOptions ro{a.tile, a.threads};
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  const auto out = render<float>(scene, camera, ro);
  write_file(dir / "rgb.png", encode_png(to_u8(out.rgb)));
  write_file(dir / "alpha.png", encode_png(to_u8(out.alpha)));
  fmt::print("wrote {} and {} ({}x{})\n", (dir / "rgb.png").string(), (dir / "alpha.png").string(), camera.width,
             camera.height);
  if (a.weights) {
    for (int k = 0; k < out.weight_maps.channels; ++k) {
      write_file(dir / fmt::format("weight_{:02}.png", k), encode_png(to_u16(out.weight_maps.channel(k))));
    }
    fmt::print("wrote {} weight maps\n", out.weight_maps.channels);
  }
  if (a.labels) {
    write_file(dir / "labels.png", encode_label_png(ownership_labels(out, a.alpha_floor)));
    fmt::print("wrote {}\n", (dir / "labels.png").string());
  }
  if (!a.features && !a.check) return 0;
  const auto features = assemble_features(out.weight_maps, scene.dictionary);
  if (a.features) {
    write_file(dir / "features.lff", encode_feature_file(features));
    fmt::print("wrote {} (C={})\n", (dir / "features.lff").string(), features.channels);
  }
  if (a.check) {
    const auto direct = render_features_direct<float>(scene, camera, ro);
    double dev = 0.0;
    for (std::size_t i = 0; i < features.data.size(); ++i) {
      dev = std::max(dev, std::abs(static_cast<double>(features.data[i]) - direct.data[i]));
    }
    const bool ok = dev <= a.tolerance;
    fmt::print("equivalence: max deviation {:.3e} (tolerance {:.0e}) {}\n", dev, a.tolerance, ok ? "ok" : "FAILED");
    if (!ok) return kCheckFailed;
  }
  return 0;
}

struct QueryArgs {
  std::string scene, camera, term, embedding_file, out_dir = ".";
  int threads = 0;
  double alpha_floor = kDefaultAlphaFloor;
};

int cmd_query(const QueryArgs& a) {
  if (a.term.empty() == a.embedding_file.empty()) throw InvalidArgument("query: give exactly one of --term or --embedding-file");
  const Scene scene = load_scene(a.scene);
  const Camera camera = load_camera(a.camera);
  VocabularyTable vocab = scene.vocabulary;
  std::vector<float> term;
  std::string name = a.term;
  if (!a.term.empty()) {
    const auto idx = vocab.find(a.term);
    if (!idx) {
      std::string known;
      for (const auto& t : vocab.terms()) known += "  " + t + "\n";
      throw InvalidArgument(fmt::format("unknown term '{}'; available terms:\n{}", a.term, known));
    }
    term = vocab.entries[*idx].embedding;
  } else {
    term = read_embedding_file(a.embedding_file);
    if (static_cast<Eigen::Index>(term.size()) != scene.dictionary.atoms.cols()) {
      throw InvalidArgument(fmt::format("embedding has {} values, the scene needs {}", term.size(),
                                        scene.dictionary.atoms.cols()));
    }
    name = "custom";
    vocab.entries.push_back({name, term});
  }
  const auto out = render<float>(scene, camera, RenderOptions{16, a.threads});
  const auto features = assemble_features(out.weight_maps, scene.dictionary);
  const auto heat = similarity_heatmap(features, term, out.alpha, a.alpha_floor);
  const auto labels = open_vocab_segment(features, vocab, out.alpha, a.alpha_floor);

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  Image<double> scaled(heat.width, heat.height, 1);
  for (std::size_t i = 0; i < heat.data.size(); ++i) scaled.data[i] = (heat.data[i] + 1.0) / 2.0;
  write_file(dir / "heatmap.png", encode_png(to_u16(scaled)));
  write_file(dir / "labels.png", encode_label_png(labels));
  fmt::print("query '{}': wrote {} and {}\n", name, (dir / "heatmap.png").string(), (dir / "labels.png").string());
  fmt::print("{:<24} {:>14}\n", "term", "max_similarity");
  for (const auto& e : vocab.entries) {
    const auto h = e.term == name ? heat : similarity_heatmap(features, e.embedding, out.alpha, a.alpha_floor);
    fmt::print("{:<24} {:>14.6f}\n", e.term, *std::max_element(h.data.begin(), h.data.end()));
  }
  return 0;
}

// ---- eval ------------------------------------------------------------------------------------

struct EvalArgs {
  std::string pred, gt, names, rgb_pred, rgb_gt, json_out;
  double min_miou = -1.0;
};

int cmd_eval(const EvalArgs& a) {
  for (const auto& p : {a.pred, a.gt}) {
    if (!fs::exists(p)) throw Error(fmt::format("input not found: {}", p));
  }
  MetricReport report = miou_accuracy(read_label_png(a.pred), read_label_png(a.gt), split(a.names, ','));
  if (a.rgb_pred.empty() != a.rgb_gt.empty()) throw InvalidArgument("eval: --rgb-pred and --rgb-gt go together");
  if (!a.rgb_pred.empty()) {
    const auto x = read_rgb_png(a.rgb_pred);
    const auto y = read_rgb_png(a.rgb_gt);
    report.psnr = psnr(x, y);
    report.ssim = ssim(x, y);
  }
  fmt::print("{}", report.to_table());
  fmt::print("{}\n", report.to_json());
  if (!a.json_out.empty()) write_text(a.json_out, report.to_json() + "\n");
  if (a.min_miou >= 0.0 && report.miou < a.min_miou) {
    fmt::print("gate: mIoU {:.6f} below --min-miou {:.6f}\n", report.miou, a.min_miou);
    return kCheckFailed;
  }
  return 0;
}

// ---- label collection ------------------------------------------------------------------------

struct FramesArgs {
  int frames = 10, width = 64, height = 48, third_entry = -1;
  std::string out_dir;
};

int cmd_synth_frames(const FramesArgs& a) {
  ensure_dir(a.out_dir);
  const auto seq = make_rect_sequence(a.frames, a.width, a.height, a.third_entry);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    write_file(fs::path(a.out_dir) / fmt::format("frame_{:04}.png", i), encode_png(seq[i]));
  }
  fmt::print("wrote {} frames to {}\n", seq.size(), a.out_dir);
  return 0;
}

std::vector<RgbImage> load_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(fmt::format("frames directory not found: {}", dir.string()));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(fmt::format("no .png frames in {}", dir.string()));
  std::vector<RgbImage> frames;
  for (const auto& f : files) frames.push_back(to_u8(read_rgb_png(f)));
  return frames;
}

struct CollectArgs {
  std::string frames, backend = "synthetic", adapter, out, summary;
  int dim = 16, threads = 1;
  std::uint64_t seed = 0;
  double nms_iou = kDefaultNmsIou, new_coverage = kDefaultNewCoverage;
};

int cmd_collect(const CollectArgs& a) {
  const auto frames = load_frames(a.frames);
  ComponentSuite suite;
  if (a.backend == "synthetic") {
    suite = synthetic_suite(a.dim, a.seed);
  } else if (a.backend == "adapter") {
    auto argv = split(a.adapter, ' ');
    if (argv.empty()) throw InvalidArgument("collect: --backend adapter needs --adapter \"command args\"");
    suite = adapter_suite(std::move(argv));
  } else {
    throw InvalidArgument(fmt::format("collect: unknown backend '{}' (synthetic or adapter)", a.backend));
  }
  const CollectionConfig config{a.nms_iou, a.new_coverage, a.threads};
  try {
    const auto result = run_collection(frames, suite, config);
    save_store(result.store, a.out);
    const auto summary = collection_summary(result.log);
    if (!a.summary.empty()) write_text(a.summary, summary);
    std::set<std::uint32_t> ids;
    for (const auto& r : result.store.records) ids.insert(r.object);
    fmt::print("wrote {} ({} records, {} object ids)\n{}", a.out, result.store.records.size(), ids.size(), summary);
    return 0;
  } catch (const CollectionError& e) {
    save_store(e.partial(), a.out);
    fmt::print(stderr, "error: {}\nwrote partial store {} ({} records, marked incomplete)\n", e.what(), a.out,
               e.partial().records.size());
    return kError;
  }
}

// ---- training diagnostics --------------------------------------------------------------------

struct GradArgs {
  int instances = 100;
  std::uint64_t seed = 0;
  bool strict = false, sign_flip = false;
  std::vector<std::string> suites;
};

int cmd_gradcheck(const GradArgs& a) {
  GradcheckOptions o;
  o.instances = a.instances;
  o.seed = a.seed;
  o.tolerance = a.strict ? kGradcheckStrictTolerance : kGradcheckTolerance;
  o.perturb_sign_flip = a.sign_flip;
  const auto report = run_gradcheck(o, a.suites);
  fmt::print("{}", report.to_table());
  return report.pass() ? 0 : kCheckFailed;
}

struct ToyArgs {
  ToyConfig config;
  std::string trace;
  std::vector<int> ks{4, 8, 16, 32};
};

int cmd_toy(const ToyArgs& a) {
  const auto r = run_toy_pipeline(a.config);
  fmt::print("{:<28}{:>12.6f}\n", "matched mask mIoU", r.train_miou);
  fmt::print("{:<28}{:>12}\n", "groups kept", r.groups_kept);
  fmt::print("{:<28}{:>12.6f}\n", "sample agreement", r.sample_agreement);
  fmt::print("{:<28}{:>12}\n", "out of view", r.out_of_view);
  fmt::print("{:<28}{:>12.6f}\n", "segmentation accuracy", r.segment_accuracy);
  fmt::print("{:<28}{:>12.6f}\n", "segmentation mIoU", r.segment_miou);
  fmt::print("{:<28}{:>12.3e}\n", "factorization deviation", r.factorization_deviation);
  if (!a.trace.empty()) write_text(a.trace, loss_trace_csv(r.trace));
  return 0;
}

int cmd_ksweep(const ToyArgs& a) {
  fmt::print("{}", k_sweep_table(k_sweep(a.ks, a.config)));
  return 0;
}

// ---- serve -----------------------------------------------------------------------------------

struct ServeArgs {
  std::string scene, host = "127.0.0.1";
  int port = 8080, threads = 0;
  std::size_t cache = 32;
};

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const ServeArgs& a) {
  SceneService service(load_scene(a.scene), ServiceOptions{a.cache, a.threads, kDefaultAlphaFloor});
  httplib::Server server;
  // httplib also sets SO_REUSEPORT, which would let two servers share a port
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
  });
  auto reply = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Headers", "Content-Type"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"ok\":true}", "application/json");
  });
  server.Get("/scene/meta", [&](const httplib::Request&, httplib::Response& res) { reply(res, service.meta()); });
  server.Post("/render", [&](const httplib::Request& req, httplib::Response& res) { reply(res, service.render(req.body)); });
  server.Post("/query", [&](const httplib::Request& req, httplib::Response& res) { reply(res, service.query(req.body)); });
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) res.set_content(fmt::format("{{\"error\":\"status {}\"}}", res.status), "application/json");
  });

  int port = a.port;
  if (port == 0) {
    port = server.bind_to_any_port(a.host);
  } else if (!server.bind_to_port(a.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(fmt::format("serve: cannot bind {}:{} (port in use?)", a.host, a.port));
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  fmt::print("listening on http://{}:{}\n", a.host, port);
  std::fflush(stdout);
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"langfield: semantic Gaussian fields"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic region scene");
  s->add_option("--seed", synth.seed);
  s->add_option("--n", synth.n, "primitives")->check(CLI::PositiveNumber);
  s->add_option("--k", synth.k, "dictionary atoms")->check(CLI::PositiveNumber);
  s->add_option("--c", synth.c, "feature channels")->check(CLI::PositiveNumber);
  s->add_option("--regions", synth.regions)->check(CLI::PositiveNumber);
  s->add_option("-o,--out", synth.out)->required();

  CameraArgs cam;
  auto* c = app.add_subcommand("camera", "Write a camera JSON that frames the synthetic scene");
  c->add_option("--width", cam.width)->check(CLI::Range(1, 4096));
  c->add_option("--height", cam.height)->check(CLI::Range(1, 4096));
  c->add_option("--azimuth", cam.azimuth);
  c->add_option("--elevation", cam.elevation);
  c->add_option("--distance", cam.distance)->check(CLI::PositiveNumber);
  c->add_option("-o,--out", cam.out);

  RenderArgs rend;
  auto* r = app.add_subcommand("render", "Render rgb, alpha, weight maps and features");
  r->add_option("--scene", rend.scene)->required();
  r->add_option("--camera", rend.camera)->required();
  r->add_option("-o,--out-dir", rend.out_dir);
  r->add_option("--threads", rend.threads)->envname("LANGFIELD_THREADS")->check(CLI::NonNegativeNumber);
  r->add_option("--tile-size", rend.tile)->check(CLI::PositiveNumber);
  r->add_flag("--weights", rend.weights, "write one 16-bit PNG per atom");
  r->add_flag("--features", rend.features, "write features.lff");
  r->add_flag("--labels", rend.labels, "write the per-pixel dominant atom as labels.png");
  r->add_flag("--check-equivalence", rend.check, "compare against feature-first compositing");
  r->add_option("--tolerance", rend.tolerance);
  r->add_option("--alpha-floor", rend.alpha_floor);

  QueryArgs qa;
  auto* q = app.add_subcommand("query", "Similarity heatmap and open-vocabulary labels for a term");
  q->add_option("--scene", qa.scene)->required();
  q->add_option("--camera", qa.camera)->required();
  q->add_option("--term", qa.term);
  q->add_option("--embedding-file", qa.embedding_file);
  q->add_option("-o,--out-dir", qa.out_dir);
  q->add_option("--threads", qa.threads)->envname("LANGFIELD_THREADS")->check(CLI::NonNegativeNumber);
  q->add_option("--alpha-floor", qa.alpha_floor);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "mIoU / accuracy (and optional PSNR / SSIM)");
  e->add_option("--pred", ev.pred)->required();
  e->add_option("--gt", ev.gt)->required();
  e->add_option("--names", ev.names, "comma-separated class names");
  e->add_option("--rgb-pred", ev.rgb_pred);
  e->add_option("--rgb-gt", ev.rgb_gt);
  e->add_option("--json", ev.json_out);
  e->add_option("--min-miou", ev.min_miou);

  FramesArgs fr;
  auto* f = app.add_subcommand("synth-frames", "Write the moving-rectangle frame sequence");
  f->add_option("--frames", fr.frames)->check(CLI::PositiveNumber);
  f->add_option("--width", fr.width)->check(CLI::Range(16, 4096));
  f->add_option("--height", fr.height)->check(CLI::Range(16, 4096));
  f->add_option("--third-entry", fr.third_entry, "frame where a third rectangle enters (-1: never)");
  f->add_option("-o,--out-dir", fr.out_dir)->required();

  CollectArgs co;
  auto* l = app.add_subcommand("collect", "Run label collection over a frames directory");
  l->add_option("--frames", co.frames)->required();
  l->add_option("--backend", co.backend)->check(CLI::IsMember({"synthetic", "adapter"}));
  l->add_option("--adapter", co.adapter, "adapter command line, split on spaces");
  l->add_option("--dim", co.dim)->check(CLI::PositiveNumber);
  l->add_option("--seed", co.seed);
  l->add_option("--threads", co.threads)->envname("LANGFIELD_THREADS")->check(CLI::PositiveNumber);
  l->add_option("--nms-iou", co.nms_iou)->check(CLI::Range(0.0, 1.0));
  l->add_option("--new-coverage", co.new_coverage)->check(CLI::Range(0.0, 1.0));
  l->add_option("-o,--out", co.out)->required();
  l->add_option("--summary", co.summary);

  GradArgs ga;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference checks of every analytic gradient");
  g->add_option("--instances", ga.instances)->check(CLI::PositiveNumber);
  g->add_option("--seed", ga.seed);
  g->add_flag("--double", ga.strict, "tighten the gate to 1e-6");
  g->add_flag("--perturb-sign-flip", ga.sign_flip, "negate analytic gradients (must fail)");
  g->add_option("--suite", ga.suites)->check(CLI::IsMember(gradcheck_suites()));

  ToyArgs toy;
  auto add_toy_flags = [&](CLI::App* sub) {
    sub->add_option("--seed", toy.config.seed);
    sub->add_option("--primitives", toy.config.primitives)->check(CLI::PositiveNumber);
    sub->add_option("--regions", toy.config.regions)->check(CLI::PositiveNumber);
    sub->add_option("--view", toy.config.view_size)->check(CLI::Range(8, 512));
    sub->add_option("--steps", toy.config.train.steps)->check(CLI::NonNegativeNumber);
    sub->add_option("--noise", toy.config.noise)->check(CLI::NonNegativeNumber);
    sub->add_option("--tau-exist", toy.config.tau_exist)->check(CLI::Range(0.0, 1.0));
  };
  auto* t = app.add_subcommand("toy", "Train the grouping head on the synthetic scene and segment it");
  add_toy_flags(t);
  t->add_option("--queries", toy.config.train.n_queries)->check(CLI::PositiveNumber);
  t->add_option("--trace", toy.trace, "write the loss trace as CSV");
  auto* k = app.add_subcommand("ksweep", "Toy pipeline over dictionary sizes");
  add_toy_flags(k);
  k->add_option("--ks", toy.ks)->delimiter(',')->check(CLI::PositiveNumber);

  ServeArgs sv;
  auto* v = app.add_subcommand("serve", "HTTP render / query service");
  v->add_option("--scene", sv.scene)->required();
  v->add_option("--host", sv.host);
  v->add_option("--port", sv.port, "0 picks a free port")->envname("LANGFIELD_PORT")->check(CLI::Range(0, 65535));
  v->add_option("--threads", sv.threads)->envname("LANGFIELD_THREADS")->check(CLI::NonNegativeNumber);
  v->add_option("--cache", sv.cache, "rendered views kept")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (c->parsed()) return cmd_camera(cam);
    if (r->parsed()) return cmd_render(rend);
    if (q->parsed()) return cmd_query(qa);
    if (e->parsed()) return cmd_eval(ev);
    if (f->parsed()) return cmd_synth_frames(fr);
    if (l->parsed()) return cmd_collect(co);
    if (g->parsed()) return cmd_gradcheck(ga);
    toy.config.train.seed = toy.config.seed;
    if (t->parsed()) return cmd_toy(toy);
    if (k->parsed()) return cmd_ksweep(toy);
    if (v->parsed()) return cmd_serve(sv);
  } catch (const InvalidArgument& ex) {
    fmt::print(stderr, "error: {}\n\n{}", ex.what(), app.get_subcommands().front()->help());
    return kError;
  } catch (const std::exception& ex) {
    fmt::print(stderr, "error: {}\n", ex.what());
    return kError;
  }
  return kError;
}
