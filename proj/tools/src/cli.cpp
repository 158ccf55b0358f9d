#include "splicemix/cli.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif
#include <nlohmann/json.hpp>

#include "splicemix/augment.hpp"
#include "splicemix/errors.hpp"
#include "splicemix/io.hpp"
#include "splicemix/metrics.hpp"
#include "splicemix/synth.hpp"

namespace splicemix::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Resolution {
  std::size_t height = 0;
  std::size_t width = 0;
};

Resolution parse_resolution(const std::string& text) {
  Resolution r;
  char tail = 0;
  unsigned long h = 0, w = 0;
  if (std::sscanf(text.c_str(), "%lux%lu%c", &h, &w, &tail) != 2 || h == 0 || w == 0) {
    throw ConfigError("bad resolution '" + text + "', expected HxW");
  }
  r.height = h;
  r.width = w;
  return r;
}

std::string batch_dir_name(std::size_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "batch_%04zu", index);
  return name;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

// Runs job(i) for i in [0, n) on up to worker_limit() threads; the lowest-index failure is rethrown.
template <typename Job>
void parallel_for(std::size_t n, Job job) {
  const std::size_t workers = std::min(worker_limit(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            job(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Shared augmentation flags. Explicit flags override values from --config.
struct AugFlags {
  std::string config;
  std::string grids;
  double mixed_frac = 0.25;
  double dropout_prob = 0.3;
  std::string dropout_scope;
  std::string cardinality;
  std::uint64_t seed = 0;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config, "AugConfig JSON file")->check(CLI::ExistingFile);
    cmd.add_option("--grids", grids, "grid family, e.g. 1x2,2x2,2x3");
    cmd.add_option("--mixed-frac", mixed_frac, "mixed images per regular image");
    cmd.add_option("--dropout-prob", dropout_prob, "probability of grid dropout per batch");
    cmd.add_option("--dropout-scope", dropout_scope, "per_batch or per_image")
        ->check(CLI::IsMember({"per_batch", "per_image"}));
    cmd.add_option("--cardinality", cardinality, "clamp or strict")
        ->check(CLI::IsMember({"clamp", "strict"}));
    cmd.add_option("--seed", seed, "seed for every random draw");
  }

  AugConfig resolve(const CLI::App& cmd) const {
    AugConfig cfg = config.empty() ? AugConfig{} : io::load_aug_config(config);
    if (config.empty() || cmd.count("--seed") > 0) cfg.seed = seed;
    if (!grids.empty()) cfg.grid_family = parse_grid_list(grids);
    if (config.empty() || cmd.count("--mixed-frac") > 0) cfg.mixed_frac = mixed_frac;
    if (config.empty() || cmd.count("--dropout-prob") > 0) cfg.dropout_prob = dropout_prob;
    if (!dropout_scope.empty()) {
      cfg.dropout_scope = dropout_scope == "per_image" ? DropoutScope::per_image : DropoutScope::per_batch;
    }
    if (!cardinality.empty()) {
      cfg.cardinality = cardinality == "strict" ? CardinalityPolicy::strict : CardinalityPolicy::clamp;
    }
    cfg.validate();
    return cfg;
  }
};

void check_divisible(std::size_t h, std::size_t w, const AugConfig& cfg) {
  for (const auto& g : cfg.grid_family) {
    // Asymmetric grids may be transposed, so both orientations must fit.
    for (const auto& o : {g, GridGeometry{g.cols, g.rows}}) {
      if (h % o.rows != 0 || w % o.cols != 0) {
        throw ConfigError("resolution " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not divisible by grid " + o.to_string());
      }
    }
  }
}

// Loads the manifest images, optionally downsampled to one resolution.
std::vector<Sample> load_samples(const fs::path& images, const io::Manifest& manifest,
                                 const std::optional<Resolution>& res, std::size_t limit) {
  const std::size_t n = std::min(limit, manifest.entries.size());
  std::vector<std::optional<Sample>> loaded(n);
  parallel_for(n, [&](std::size_t i) {
    ImageTensor img = io::decode_image(images / manifest.entries[i].image);
    if (res && (img.height() != res->height || img.width() != res->width)) {
      img = bilinear_downsample(img, res->height, res->width);
    }
    loaded[i] = Sample{std::move(img), manifest.label(i)};
  });
  std::vector<Sample> out;
  out.reserve(n);
  for (auto& s : loaded) out.push_back(std::move(*s));
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (!out[i].image.same_shape(out[0].image)) {
      throw DimensionError("image '" + manifest.entries[i].image + "' has a different shape than '" +
                           manifest.entries[0].image + "'; pass --resolution to resample");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AugmentCmd {
  std::string images, manifest, out, resolution;
  std::size_t batch_size = 32;
  bool drop_last = false;
  AugFlags aug;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("augment", "write SpliceMix batch archives");
    cmd->add_option("--images", images, "image directory")->required();
    cmd->add_option("--manifest", manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--batch-size", batch_size, "regular batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--resolution", resolution, "downsample every image to HxW");
    cmd->add_flag("--drop-last", drop_last, "skip a trailing incomplete batch");
    aug.attach(*cmd);
  }

  int run(const CLI::App& cmd, std::ostream& os) const {
    const AugConfig cfg = aug.resolve(cmd);
    std::optional<Resolution> res;
    if (!resolution.empty()) res = parse_resolution(resolution);
    const auto m = io::load_manifest(manifest);
    if (m.entries.empty()) throw Error("manifest " + manifest + " has no entries");
    const auto samples = load_samples(images, m, res, m.entries.size());
    check_divisible(samples[0].image.height(), samples[0].image.width(), cfg);

    std::size_t n_batches = (samples.size() + batch_size - 1) / batch_size;
    if (drop_last) n_batches = samples.size() / batch_size;
    if (n_batches == 0) throw Error("no complete batch of " + std::to_string(batch_size) + " images");

    const fs::path root(out);
    fs::create_directories(root);
    std::vector<json> rows(n_batches);
    parallel_for(n_batches, [&](std::size_t b) {
      const std::size_t start = b * batch_size;
      const std::size_t end = std::min(start + batch_size, samples.size());
      const std::span<const Sample> batch(samples.data() + start, end - start);
      SeededStream rng(derive_seed(cfg.seed, b));
      SplicedBatch spliced;
      try {
        spliced = splicemix(batch, cfg, rng);
      } catch (const PlanningError& e) {
        throw PlanningError("batch " + std::to_string(b) + ": " + e.what());
      }
      io::write_batch_archive(spliced, root / batch_dir_name(b));
      rows[b] = {{"archive", batch_dir_name(b)},
                 {"regular", spliced.regulars.size()},
                 {"mixed", spliced.mixed.size()},
                 {"grid", spliced.plan.geom.to_string()},
                 {"dropout_count", spliced.plan.dropout_count},
                 {"plan_digest", io::plan_digest(spliced.plan)}};
    });

    std::size_t regular = 0, mixed = 0;
    for (const auto& r : rows) {
      regular += r["regular"].get<std::size_t>();
      mixed += r["mixed"].get<std::size_t>();
    }
    const auto& shape = samples[0].image;
    const json summary = {{"batches", n_batches},
                          {"batch_size", batch_size},
                          {"regular_images", regular},
                          {"mixed_images", mixed},
                          {"image_shape", {shape.channels(), shape.height(), shape.width()}},
                          {"config", io::aug_config_to_json(cfg)},
                          {"archives", rows}};
    io::write_json(summary, root / "summary.json");
    os << "wrote " << n_batches << " archives (" << regular << " regular + " << mixed
       << " mixed images) to " << out << '\n';
    return kSuccess;
  }
};

struct PreviewCmd {
  std::string images, manifest, out, resolution;
  std::size_t count = 32;
  AugFlags aug;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("preview", "render the mixed images of one batch as PNG");
    cmd->add_option("--images", images, "image directory")->required();
    cmd->add_option("--manifest", manifest, "manifest JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--count", count, "regular images taken from the manifest")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--resolution", resolution, "downsample every image to HxW");
    aug.attach(*cmd);
  }

  int run(const CLI::App& cmd, std::ostream& os) const {
    const AugConfig cfg = aug.resolve(cmd);
    std::optional<Resolution> res;
    if (!resolution.empty()) res = parse_resolution(resolution);
    const auto m = io::load_manifest(manifest);
    if (m.entries.empty()) throw Error("manifest " + manifest + " has no entries");
    const auto samples = load_samples(images, m, res, count);
    check_divisible(samples[0].image.height(), samples[0].image.width(), cfg);
    SeededStream rng(derive_seed(cfg.seed, 0));
    const auto spliced = splicemix(samples, cfg, rng);
    const auto paths = io::encode_preview(spliced, out);
    io::write_json(io::plan_to_json(spliced.plan), fs::path(out) / "plan.json");
    for (const auto& p : paths) os << p.string() << '\n';
    return kSuccess;
  }
};

struct GenSynthCmd {
  std::string out;
  std::string resolution = "24x24";
  synth::SynthConfig cfg;
  double prior = 0.3;
  double co_occur = 0.95;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("gen-synth", "generate the synthetic glyph dataset as PNG + manifests");
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--seed", cfg.seed, "dataset seed");
    cmd->add_option("--classes", cfg.classes, "number of classes")->check(CLI::Range(2, 64));
    cmd->add_option("--train-n", cfg.train_n, "training images");
    cmd->add_option("--test-n", cfg.test_n, "test images");
    cmd->add_option("--resolution", resolution, "canvas HxW, divisible by 6");
    cmd->add_option("--prior", prior, "per-class presence probability");
    cmd->add_option("--co-occur-prob", co_occur, "P(class 1 | class 0) in training");
    cmd->add_option("--test-co-occur-prob", cfg.test_co_occur_prob, "same coupling for the test split");
    cmd->add_option("--noise", cfg.noise_amp, "background noise amplitude");
  }

  int run(std::ostream& os) {
    const auto r = parse_resolution(resolution);
    cfg.height = r.height;
    cfg.width = r.width;
    cfg.class_prior.assign(cfg.classes, prior);
    cfg.biased_pairs = {{0, 1, co_occur}};
    cfg.validate();
    const auto data = synth::gen_dataset(cfg);

    const fs::path root(out);
    io::Manifest classes;
    for (std::size_t k = 0; k < cfg.classes; ++k) classes.classes.push_back("class_" + std::to_string(k));
    for (const auto* split : {"train", "test"}) {
      const auto& samples = std::string(split) == "train" ? data.train : data.test;
      fs::create_directories(root / split);
      io::Manifest manifest{classes.classes, {}};
      manifest.entries.resize(samples.size());
      parallel_for(samples.size(), [&](std::size_t i) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        io::encode_png(samples[i].image, root / split / name);
        manifest.entries[i] = {std::string(split) + "/" + name, samples[i].label.indices()};
      });
      io::save_manifest(manifest, root / (std::string(split) + "_manifest.json"));
    }
    json splits = json::array();
    for (const auto& s : data.splits) {
      splits.push_back({{"b", s.pair.b},
                        {"c", s.pair.c},
                        {"co_occur_prob", s.pair.co_occur_prob},
                        {"exclusive", s.exclusive},
                        {"cooccur", s.cooccur}});
    }
    io::write_json({{"seed", cfg.seed}, {"pairs", splits}}, root / "splits.json");
    os << "wrote " << data.train.size() << " train and " << data.test.size() << " test images to "
       << out << '\n';
    return kSuccess;
  }
};

struct TrainDemoCmd {
  std::string out;
  std::string methods = "baseline,splicemix,splicemix_cl";
  std::size_t seeds = 5;
  std::uint64_t first_seed = 1;
  synth::SynthConfig data;
  synth::TrainConfig train;
  double co_occur = 0.95;
  AugFlags aug;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("train-demo", "run the synthetic co-occurrence bias experiment");
    cmd->add_option("--out", out, "directory for report.json and curves.csv (default: JSON on stdout)");
    cmd->add_option("--methods", methods, "comma list of baseline, splicemix, splicemix_cl");
    cmd->add_option("--seeds", seeds, "number of seeds")->check(CLI::PositiveNumber);
    cmd->add_option("--first-seed", first_seed, "seeds run from this value upward");
    cmd->add_option("--epochs", train.epochs, "training epochs");
    cmd->add_option("--batch-size", train.batch_size, "regular batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--lr", train.lr, "learning rate (per batch mean)");
    cmd->add_option("--filters", train.filters, "feature bank width")->check(CLI::PositiveNumber);
    cmd->add_option("--kernel", train.kernel, "feature bank kernel size (odd)");
    cmd->add_option("--train-n", data.train_n, "training images");
    cmd->add_option("--test-n", data.test_n, "test images");
    cmd->add_option("--co-occur-prob", co_occur, "P(class 1 | class 0) in training");
    cmd->add_option("--noise", data.noise_amp, "background noise amplitude");
    aug.attach(*cmd);
  }

  int run(const CLI::App& cmd, std::ostream& os) {
    AugConfig cfg = aug.resolve(cmd);
    data.biased_pairs = {{0, 1, co_occur}};
    data.validate();
    check_divisible(data.height, data.width, cfg);
    std::vector<std::uint64_t> seed_list;
    for (std::size_t s = 0; s < seeds; ++s) seed_list.push_back(first_seed + s);
    const auto report = synth::run_experiment(data, cfg, train, synth::parse_methods(methods), seed_list,
                                              worker_limit());
    const auto doc = synth::report_to_json(report);
    if (out.empty()) {
      os << doc.dump(2) << '\n';
      return kSuccess;
    }
    fs::create_directories(out);
    io::write_json(doc, fs::path(out) / "report.json");
    write_text(fs::path(out) / "curves.csv", synth::curves_csv(report));
    char line[160];
    os << "method        seed  exclusive  cooccur   full  test_loss\n";
    for (const auto& r : report.runs) {
      std::snprintf(line, sizeof(line), "%-13s %4llu  %9.2f  %7.2f  %5.2f  %9.4f\n",
                    synth::to_string(r.method).c_str(), static_cast<unsigned long long>(r.seed),
                    r.exclusive_map, r.cooccur_map, r.full_map, r.test_loss);
      os << line;
    }
    return kSuccess;
  }
};

struct EvalCmd {
  std::string scores, labels, out;
  double threshold = 0.5;
  std::string topk_mode = "threshold_and_topk";

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "mAP and precision/recall metrics for a score table");
    cmd->add_option("--scores", scores, "float32 [N, C] NPY")->required()->check(CLI::ExistingFile);
    cmd->add_option("--labels", labels, "uint8 [N, C] NPY")->required()->check(CLI::ExistingFile);
    cmd->add_option("--threshold", threshold, "positive threshold for P/R metrics");
    cmd->add_option("--topk-mode", topk_mode, "threshold_and_topk or topk_only")
        ->check(CLI::IsMember({"threshold_and_topk", "topk_only"}));
    cmd->add_option("--out", out, "write the JSON report here instead of stdout");
  }

  int run(std::ostream& os) const {
    const auto s = io::read_npy(scores);
    const auto l = io::read_npy(labels);
    if (s.dtype != io::DType::float32 || s.shape.size() != 2) {
      throw FormatError(scores + ": expected float32 [N, C]");
    }
    if (l.dtype != io::DType::uint8 || l.shape != s.shape) {
      throw FormatError(labels + ": expected uint8 with the same shape as the scores");
    }
    const auto floats = s.to_floats();
    const auto bytes = l.to_uint8();
    const metrics::EvalTable table(s.shape[0], s.shape[1],
                                   std::vector<double>(floats.begin(), floats.end()),
                                   std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
    const auto mode =
        topk_mode == "topk_only" ? metrics::TopKMode::topk_only : metrics::TopKMode::threshold_and_topk;
    const auto doc = io::metrics_to_json(metrics::evaluate(table, threshold, mode));
    if (out.empty()) {
      os << doc.dump(2) << '\n';
    } else {
      io::write_json(doc, out);
    }
    return kSuccess;
  }
};

struct StatsCmd {
  std::string archive, out;

  void attach(CLI::App& app) {
    auto* cmd = app.add_subcommand("stats", "label density of regular vs mixed samples in an archive");
    cmd->add_option("--archive", archive, "batch archive directory")->required();
    cmd->add_option("--out", out, "write the JSON report here instead of stdout");
  }

  int run(std::ostream& os) const {
    const auto a = io::read_batch_archive(archive);
    const auto labels = io::unstack_labels(a.labels);
    const std::size_t n_regular = a.n_regular();
    const std::size_t classes = a.labels.shape[1];
    std::size_t regular_bits = 0, mixed_bits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      (i < n_regular ? regular_bits : mixed_bits) += labels[i].count();
    }
    const std::size_t n_mixed = labels.size() - n_regular;
    auto mean = [](std::size_t bits, std::size_t n) {
      return n == 0 ? json(nullptr) : json(static_cast<double>(bits) / static_cast<double>(n));
    };
    // positives per negative over all label bits of a group
    auto pos_neg = [&](std::size_t bits, std::size_t n) {
      const std::size_t total = n * classes;
      return n == 0 || bits == total
                 ? json(nullptr)
                 : json(static_cast<double>(bits) / static_cast<double>(total - bits));
    };
    json ratio = nullptr;
    json pn_change = nullptr;
    if (n_mixed > 0 && regular_bits > 0) {
      ratio = (static_cast<double>(mixed_bits) / static_cast<double>(n_mixed)) /
              (static_cast<double>(regular_bits) / static_cast<double>(n_regular));
      const auto pr = pos_neg(regular_bits, n_regular);
      const auto pm = pos_neg(mixed_bits, n_mixed);
      if (!pr.is_null() && !pm.is_null()) pn_change = pm.get<double>() / pr.get<double>();
    }
    const json doc = {{"regular_samples", n_regular},
                      {"mixed_samples", n_mixed},
                      {"classes", classes},
                      {"regular_mean_positive", mean(regular_bits, n_regular)},
                      {"mixed_mean_positive", mean(mixed_bits, n_mixed)},
                      {"ratio_change", ratio},
                      {"regular_pos_neg_ratio", pos_neg(regular_bits, n_regular)},
                      {"mixed_pos_neg_ratio", pos_neg(mixed_bits, n_mixed)},
                      {"pos_neg_ratio_change", pn_change}};
    if (out.empty()) {
      os << doc.dump(2) << '\n';
    } else {
      io::write_json(doc, out);
    }
    return kSuccess;
  }
};

}  // namespace

std::size_t worker_limit() {
  const char* env = std::getenv("SPLICEMIX_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  return (end != env && *end == '\0' && v > 0) ? static_cast<std::size_t>(v) : 1;
}

int run(std::span<const std::string> argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"SpliceMix augmentation, metrics and synthetic benchmark"};
  app.name(argv.empty() ? "splicemix" : fs::path(argv[0]).filename().string());
  app.require_subcommand(1);
  AugmentCmd augment;
  PreviewCmd preview;
  GenSynthCmd gen_synth;
  TrainDemoCmd train_demo;
  EvalCmd eval;
  StatsCmd stats;
  augment.attach(app);
  preview.attach(app);
  gen_synth.attach(app);
  train_demo.attach(app);
  eval.attach(app);
  stats.attach(app);

  std::vector<const char*> args;
  for (const auto& a : argv) args.push_back(a.c_str());
  if (args.empty()) args.push_back("splicemix");
  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nrun with --help for usage\n";
    return kUsage;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (name == "augment") return augment.run(*cmd, out);
    if (name == "preview") return preview.run(*cmd, out);
    if (name == "gen-synth") return gen_synth.run(out);
    if (name == "train-demo") return train_demo.run(*cmd, out);
    if (name == "eval") return eval.run(out);
    if (name == "stats") return stats.run(out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  err << "error: unknown subcommand " << name << '\n';
  return kUsage;
}

}  // namespace splicemix::cli
