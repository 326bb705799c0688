#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "iaa/iaa.hpp"

namespace fs = std::filesystem;
using iaa::Json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct Common {
  unsigned threads = 1;
  bool human = false;
  bool print_config = false;
  std::string config;
};

void add_common(CLI::App *app, Common &c, bool with_config) {
  app->add_option("--threads", c.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app->add_flag("--human", c.human, "Human-readable stdout instead of JSON");
  if (with_config) {
    app->add_option("--config", c.config, "JSON config file (flags override its keys)");
    app->add_flag("--print-config", c.print_config, "Print the effective config and exit");
  }
}

std::string read_text(const std::string &path) {
  if (path == "-") {
    std::ostringstream os;
    os << std::cin.rdbuf();
    return os.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw iaa::DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string &path, const std::string &text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw iaa::DataError("cannot write '" + path + "'");
  out << text;
  if (!out)
    throw iaa::DataError("failed writing '" + path + "'");
}

Json parse_json(const std::string &text, const std::string &what, bool config) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error &e) {
    const std::string msg = what + ": " + e.what();
    if (config)
      throw iaa::ConfigError(msg);
    throw iaa::DataError(msg);
  }
}

Json load_config(const Common &c) {
  if (c.config.empty())
    return Json::object();
  std::ifstream in(c.config, std::ios::binary);
  if (!in)
    throw iaa::ConfigError("cannot open config '" + c.config + "'");
  std::ostringstream os;
  os << in.rdbuf();
  Json j = parse_json(os.str(), c.config, true);
  if (!j.is_object())
    throw iaa::ConfigError(c.config + ": expected a JSON object");
  return j;
}

std::uint64_t parse_seed(const std::string &s, const char *what) {
  std::uint64_t v = 0;
  const auto *end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty())
    throw iaa::ConfigError(std::string(what) + ": '" + s + "' is not an unsigned integer seed");
  return v;
}

/// flag > config file > IAA_SEED > current value.
void resolve_seed(std::uint64_t &seed, const CLI::Option *flag, std::uint64_t flag_value, const Json &file) {
  if (flag->count()) {
    seed = flag_value;
  } else if (file.contains("seed")) {
    return;
  } else if (const char *env = std::getenv("IAA_SEED"); env && *env) {
    seed = parse_seed(env, "IAA_SEED");
  }
}

std::string dump(const Json &j) { return j.dump(2) + "\n"; }

void emit(const Common &c, const Json &j, const std::function<void(std::ostream &)> &human) {
  if (c.human)
    human(std::cout);
  else
    std::cout << dump(j);
}

iaa::Dataset load_data(const std::string &path, bool header) {
  if (!fs::exists(path))
    throw iaa::DataError("no such file '" + path + "'");
  return iaa::load_dataset(path, iaa::format_from_path(path), iaa::CsvOptions{header});
}

bool looks_like_dataset(const std::string &path) {
  if (path == "-")
    return false;
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return (in && std::string(magic, 4) == "IAAD") || iaa::format_from_path(path) == iaa::FileFormat::csv;
}

iaa::Dataset encoded(const iaa::Dataset &d, const std::string &encoder_path) {
  if (encoder_path.empty())
    return d;
  const auto enc = iaa::load_encoder(encoder_path);
  if (enc.input_dim() != d.dim())
    throw iaa::DataError("encoder expects dimension " + std::to_string(enc.input_dim()) + ", data has " +
                         std::to_string(d.dim()));
  return iaa::Dataset::from_raw(enc.embed(d.embeddings()), d.raw_labels(), d.name());
}

iaa::StatsDocument stats_document(const iaa::Dataset &d, iaa::CovarianceMode mode) {
  iaa::StatsDocument doc;
  doc.classes = iaa::estimate_class_stats(d, mode);
  doc.global = iaa::estimate_global_covariance(doc.classes);
  doc.original_ids = d.original_ids();
  return doc;
}

iaa::StatsDocument load_stats(const std::string &path) {
  return iaa::stats_from_json(parse_json(read_text(path), path == "-" ? "stdin" : path, false));
}

void metric_options(CLI::App *app, iaa::DistanceMetricConfig &m, std::map<std::string, CLI::Option *> &opts) {
  opts["p"] = app->add_option("--p", m.p, "Entrywise norm order for distances");
  opts["no-square-mean"] = app->add_flag("--no-square-mean", "Compare means directly instead of squared");
  opts["sqrt-cov"] = app->add_flag("--sqrt-cov", "Compare covariance square roots");
}

void apply_metric_flags(iaa::DistanceMetricConfig &m, std::map<std::string, CLI::Option *> &opts, int p_flag) {
  if (opts["p"]->count())
    m.p = p_flag;
  if (opts["no-square-mean"]->count())
    m.square_mean = false;
  if (opts["sqrt-cov"]->count())
    m.sqrt_cov = true;
}

// ---- subcommands -------------------------------------------------------------

struct SynthArgs {
  Common common;
  iaa::WorldConfig world;
  std::uint64_t seed = 0;
  std::string output, holdout_output;
  std::map<std::string, CLI::Option *> opts;
};

void setup_synth(CLI::App &root, SynthArgs &a) {
  auto *app = root.add_subcommand("synth", "Draw a labeled Gaussian world");
  add_common(app, a.common, true);
  auto &w = a.world;
  a.opts["classes"] = app->add_option("--classes", w.classes, "Number of classes");
  a.opts["dim"] = app->add_option("--dim", w.embedding_dim, "Latent dimension");
  a.opts["input-dim"] = app->add_option("--input-dim", w.input_dim, "Observed dimension (default: --dim)");
  a.opts["min-samples"] = app->add_option("--min-samples", w.min_samples, "Smallest class size");
  a.opts["max-samples"] = app->add_option("--max-samples", w.max_samples, "Largest class size");
  a.opts["corr"] = app->add_option("--corr", w.corr_knob, "Mean/covariance coupling in [0, 1]");
  a.opts["variance-floor"] = app->add_option("--variance-floor", w.variance_floor, "Per-dimension variance floor");
  a.opts["variance-scale"] = app->add_option("--variance-scale", w.variance_scale, "Variance shape scale");
  a.opts["noise"] = app->add_option("--noise", w.input_noise, "Isotropic input noise sd");
  a.opts["holdout-classes"] = app->add_option("--holdout-classes", w.holdout_classes, "Extra held-out classes");
  a.opts["holdout-min"] = app->add_option("--holdout-min", w.holdout_min_samples, "Held-out smallest class size");
  a.opts["holdout-max"] = app->add_option("--holdout-max", w.holdout_max_samples, "Held-out largest class size");
  a.opts["seed"] = app->add_option("--seed", a.seed, "World seed");
  app->add_option("-o,--output", a.output, "Dataset path (.iaad or .csv)")->required();
  app->add_option("--holdout-output", a.holdout_output, "Held-out dataset path");
}

int run_synth(SynthArgs &a) {
  const Json file = load_config(a.common);
  iaa::WorldConfig cfg;
  iaa::from_json(file, cfg);
  const iaa::WorldConfig &flags = a.world;
  auto given = [&](const char *k) { return a.opts[k]->count() > 0; };
  if (given("classes")) cfg.classes = flags.classes;
  if (given("dim")) {
    cfg.embedding_dim = flags.embedding_dim;
    if (!given("input-dim") && !file.contains("input_dim"))
      cfg.input_dim = flags.embedding_dim;
  }
  if (given("input-dim")) cfg.input_dim = flags.input_dim;
  if (given("min-samples")) cfg.min_samples = flags.min_samples;
  if (given("max-samples")) cfg.max_samples = flags.max_samples;
  if (given("corr")) cfg.corr_knob = flags.corr_knob;
  if (given("variance-floor")) cfg.variance_floor = flags.variance_floor;
  if (given("variance-scale")) cfg.variance_scale = flags.variance_scale;
  if (given("noise")) cfg.input_noise = flags.input_noise;
  if (given("holdout-classes")) cfg.holdout_classes = flags.holdout_classes;
  if (given("holdout-min")) cfg.holdout_min_samples = flags.holdout_min_samples;
  if (given("holdout-max")) cfg.holdout_max_samples = flags.holdout_max_samples;
  resolve_seed(cfg.seed, a.opts["seed"], a.seed, file);
  cfg.validate();
  if (a.common.print_config) {
    std::cout << dump(iaa::to_json(cfg));
    return 0;
  }
  if (cfg.holdout_classes > 0 && a.holdout_output.empty())
    throw iaa::ConfigError("--holdout-classes needs --holdout-output");

  const auto world = iaa::make_synthetic_world(cfg);
  iaa::save_dataset(world.train, a.output);
  Json summary = {{"output", a.output},
                  {"n", world.train.size()},
                  {"dim", world.train.dim()},
                  {"classes", world.train.num_classes()},
                  {"seed", cfg.seed}};
  if (world.holdout) {
    iaa::save_dataset(*world.holdout, a.holdout_output);
    summary["holdout_output"] = a.holdout_output;
    summary["holdout_n"] = world.holdout->size();
  }
  emit(a.common, summary, [&](std::ostream &os) {
    os << "wrote " << world.train.size() << " samples, " << world.train.num_classes() << " classes, dim "
       << world.train.dim() << " to " << a.output << " (seed " << cfg.seed << ")\n";
  });
  return 0;
}

struct StatsArgs {
  Common common;
  std::string input, output, mode = "diagonal";
  bool header = false;
};

void setup_stats(CLI::App &root, StatsArgs &a) {
  auto *app = root.add_subcommand("stats", "Estimate per-class mean and covariance");
  add_common(app, a.common, false);
  app->add_option("input", a.input, "Dataset (.iaad or .csv)")->required();
  app->add_option("--mode", a.mode, "diagonal or full");
  app->add_flag("--header", a.header, "CSV input has a header line");
  app->add_option("-o,--output", a.output, "Output JSON (default: stdout)");
}

int run_stats(StatsArgs &a) {
  const auto mode = iaa::covariance_mode_from(a.mode);
  const auto data = load_data(a.input, a.header);
  const auto doc = stats_document(data, mode);
  const Json j = iaa::to_json(doc);
  if (!a.output.empty() || !a.common.human) {
    write_text(a.output, dump(j));
    return 0;
  }
  std::cout << "classes " << doc.classes.size() << ", dim " << doc.global.cov.dim() << ", n "
            << doc.global.total_count << "\n";
  for (std::size_t k = 0; k < doc.classes.size(); ++k)
    std::cout << "  class " << doc.original_ids[k] << ": n=" << doc.classes[k].count
              << " mean variance=" << doc.classes[k].cov.diagonal().mean() << "\n";
  return 0;
}

struct CorrectArgs {
  Common common;
  std::string input = "-", output, degenerate = "keep";
  iaa::CorrectionConfig cfg;
  std::map<std::string, CLI::Option *> opts;
};

void setup_correct(CLI::App &root, CorrectArgs &a) {
  auto *app = root.add_subcommand("correct", "Neighbor-corrected covariances");
  add_common(app, a.common, true);
  app->add_option("input", a.input, "Stats JSON (default: stdin)");
  a.opts["k"] = app->add_option("--k", a.cfg.neighbors, "Neighbor count K");
  a.opts["sigma-m"] = app->add_option("--sigma-m", a.cfg.sigma_m, "Mean-distance bandwidth (inf allowed)");
  a.opts["sigma-cv"] = app->add_option("--sigma-cv", a.cfg.sigma_cv, "Covariance-distance bandwidth (inf allowed)");
  a.opts["beta"] = app->add_option("--beta", a.cfg.beta, "Weight-function slope");
  a.opts["tau"] = app->add_option("--tau", a.cfg.tau, "Largest class size that is corrected");
  a.opts["gamma"] = app->add_option("--gamma", a.cfg.gamma, "Global covariance share");
  a.opts["include-self"] = app->add_flag("--include-self", "Admit the class itself as a neighbor");
  metric_options(app, a.cfg.metric, a.opts);
  app->add_option("--degenerate", a.degenerate, "keep, identity, global or diagonal");
  app->add_option("-o,--output", a.output, "Output JSON (default: stdout)");
}

int run_correct(CorrectArgs &a) {
  const Json file = load_config(a.common);
  iaa::CorrectionConfig cfg;
  iaa::from_json(file, cfg);
  auto given = [&](const char *k) { return a.opts[k]->count() > 0; };
  if (given("k")) cfg.neighbors = a.cfg.neighbors;
  if (given("sigma-m")) cfg.sigma_m = a.cfg.sigma_m;
  if (given("sigma-cv")) cfg.sigma_cv = a.cfg.sigma_cv;
  if (given("beta")) cfg.beta = a.cfg.beta;
  if (given("tau")) cfg.tau = a.cfg.tau;
  if (given("gamma")) cfg.gamma = a.cfg.gamma;
  if (given("include-self")) cfg.include_self = true;
  apply_metric_flags(cfg.metric, a.opts, a.cfg.metric.p);
  cfg.validate();
  const auto how = iaa::degeneration_from(a.degenerate);
  if (a.common.print_config) {
    std::cout << dump(iaa::to_json(cfg));
    return 0;
  }
  auto doc = load_stats(a.input);
  auto corrected = iaa::correct_covariance(doc.classes, doc.global, cfg);
  doc.classes = iaa::degenerate_covariance(std::move(corrected.classes), doc.global, how);
  doc.corrections = std::move(corrected.corrections);
  const Json j = iaa::to_json(doc);
  if (!a.output.empty() || !a.common.human) {
    write_text(a.output, dump(j));
    return 0;
  }
  for (std::size_t k = 0; k < doc.classes.size(); ++k)
    std::cout << "class " << doc.original_ids[k] << ": n=" << doc.classes[k].count
              << " alpha=" << doc.corrections->at(k).alpha << " neighbors=" << doc.corrections->at(k).neighbors.size()
              << "\n";
  return 0;
}

struct CorrelateArgs {
  Common common;
  std::string input, output, curves, mode = "diagonal";
  bool header = false;
  iaa::DistanceMetricConfig metric;
  std::map<std::string, CLI::Option *> opts;
};

void setup_correlate(CLI::App &root, CorrelateArgs &a) {
  auto *app = root.add_subcommand("correlate", "Spearman correlation between mean and covariance distances");
  add_common(app, a.common, true);
  app->add_option("input", a.input, "Stats JSON or dataset")->required();
  app->add_option("--mode", a.mode, "Covariance mode when the input is a dataset");
  app->add_flag("--header", a.header, "CSV input has a header line");
  metric_options(app, a.metric, a.opts);
  app->add_option("--curves", a.curves, "Write the normalized distance curves as CSV");
  app->add_option("-o,--output", a.output, "Report JSON (default: stdout)");
}

int run_correlate(CorrelateArgs &a) {
  const Json file = load_config(a.common);
  iaa::DistanceMetricConfig cfg;
  iaa::from_json(file, cfg);
  apply_metric_flags(cfg, a.opts, a.metric.p);
  cfg.validate();
  if (a.common.print_config) {
    std::cout << dump(iaa::to_json(cfg));
    return 0;
  }
  const auto stats = looks_like_dataset(a.input)
                         ? stats_document(load_data(a.input, a.header), iaa::covariance_mode_from(a.mode)).classes
                         : load_stats(a.input).classes;
  const auto rep = iaa::correlation_report(stats, cfg);
  if (!a.curves.empty())
    write_text(a.curves, iaa::curves_csv(rep));
  const Json j = iaa::to_json(rep);
  if (!a.output.empty() || !a.common.human) {
    write_text(a.output, dump(j));
    return 0;
  }
  std::cout << "mean rho " << rep.mean_rho << " over " << rep.per_class_rho.size() << " classes\n";
  return 0;
}

struct GenerateArgs {
  Common common;
  std::string input, stats, output;
  bool header = false;
  iaa::AugmentConfig cfg;
  std::string strategy;
  std::map<std::string, CLI::Option *> opts;
};

void setup_generate(CLI::App &root, GenerateArgs &a) {
  auto *app = root.add_subcommand("generate", "Synthetic samples around embeddings or class means");
  add_common(app, a.common, true);
  app->add_option("input", a.input, "Embeddings dataset")->required();
  app->add_option("--stats", a.stats, "Stats JSON (raw or corrected)")->required();
  app->add_flag("--header", a.header, "CSV input has a header line");
  a.opts["lambda"] = app->add_option("--lambda", a.cfg.lambda, "Variation strength");
  a.opts["m"] = app->add_option("--m", a.cfg.per_sample, "Samples per original");
  a.opts["strategy"] = app->add_option("--strategy", a.strategy, "dynamic or fixed");
  a.opts["seed"] = app->add_option("--seed", a.cfg.seed, "Generation seed");
  a.opts["no-renormalize"] = app->add_flag("--no-renormalize", "Keep samples off the unit sphere");
  app->add_option("-o,--output", a.output, "Samples dataset; a .json sidecar is written next to it")->required();
}

int run_generate(GenerateArgs &a) {
  const Json file = load_config(a.common);
  iaa::AugmentConfig cfg;
  iaa::from_json(file, cfg);
  auto given = [&](const char *k) { return a.opts[k]->count() > 0; };
  if (given("lambda")) cfg.lambda = a.cfg.lambda;
  if (given("m")) cfg.per_sample = a.cfg.per_sample;
  if (given("strategy")) cfg.strategy = iaa::augment_strategy_from(a.strategy);
  if (given("no-renormalize")) cfg.renormalize = false;
  resolve_seed(cfg.seed, a.opts["seed"], a.cfg.seed, file);
  cfg.validate();
  if (a.common.print_config) {
    std::cout << dump(iaa::to_json(cfg));
    return 0;
  }
  if (cfg.per_sample < 1)
    throw iaa::ConfigError("generate needs --m >= 1");

  const auto data = load_data(a.input, a.header);
  const auto doc = load_stats(a.stats);
  if (doc.classes.front().mean.size() != static_cast<Eigen::Index>(data.dim()))
    throw iaa::DataError("stats dimension does not match the embeddings");
  std::map<std::int64_t, iaa::ClassId> dense;
  for (std::size_t k = 0; k < doc.original_ids.size(); ++k)
    dense.emplace(doc.original_ids[k], static_cast<iaa::ClassId>(k + 1));
  std::vector<iaa::ClassId> labels;
  for (auto raw : data.raw_labels()) {
    auto it = dense.find(raw);
    if (it == dense.end())
      throw iaa::DataError("no statistics for class " + std::to_string(raw));
    labels.push_back(it->second);
  }

  const auto syn = cfg.strategy == iaa::AugmentStrategy::dynamic
                       ? iaa::generate_dynamic(data.embeddings(), labels, doc.classes, cfg)
                       : iaa::generate_fixed(labels, doc.classes, cfg);
  std::vector<std::int64_t> raw;
  raw.reserve(syn.labels.size());
  for (auto c : syn.labels)
    raw.push_back(doc.original_ids[static_cast<std::size_t>(c - 1)]);
  iaa::save_dataset(iaa::Dataset::from_raw(syn.samples, raw, "synthetic"), a.output);
  const Json sidecar = {{"origin_indices", syn.origin},
                        {"lambda", cfg.lambda},
                        {"M", cfg.per_sample},
                        {"strategy", iaa::to_string(cfg.strategy)},
                        {"seed", cfg.seed}};
  write_text(a.output + ".json", dump(sidecar));
  emit(a.common, {{"output", a.output}, {"sidecar", a.output + ".json"}, {"n", syn.size()}, {"seed", cfg.seed}},
       [&](std::ostream &os) {
         os << "wrote " << syn.size() << " synthetic samples to " << a.output << " (seed " << cfg.seed << ")\n";
       });
  return 0;
}

struct TrainArgs {
  Common common;
  std::string input, holdout, output, log;
  bool header = false, timing = false;
  iaa::TrainConfig cfg;
  std::string loss;
  std::map<std::string, CLI::Option *> opts;
};

void setup_train(CLI::App &root, TrainArgs &a) {
  auto *app = root.add_subcommand("train", "Train an encoder with or without IAA");
  add_common(app, a.common, true);
  app->add_option("input", a.input, "Training dataset")->required();
  app->add_option("--holdout", a.holdout, "Evaluation dataset, scored after every epoch");
  app->add_flag("--header", a.header, "CSV inputs have a header line");
  a.opts["epochs"] = app->add_option("--epochs", a.cfg.epochs, "Epoch count");
  a.opts["lr"] = app->add_option("--lr", a.cfg.learning_rate, "Learning rate");
  a.opts["lambda"] = app->add_option("--lambda", a.cfg.augment.lambda, "Variation strength");
  a.opts["m"] = app->add_option("--m", a.cfg.augment.per_sample, "Synthetic samples per original (0 disables)");
  a.opts["loss"] = app->add_option("--loss", a.loss, "contrastive, triplet or ms");
  a.opts["baseline"] = app->add_flag("--baseline", "Train without statistics or augmentation");
  a.opts["seed"] = app->add_option("--seed", a.cfg.seed, "Training seed");
  app->add_flag("--timing", a.timing, "Include wall-clock times in the run log");
  app->add_option("-o,--output", a.output, "Encoder parameters file")->required();
  app->add_option("--log", a.log, "Run log, one JSON record per epoch");
}

int run_train(TrainArgs &a) {
  const Json file = load_config(a.common);
  iaa::TrainConfig cfg;
  iaa::from_json(file, cfg);
  auto given = [&](const char *k) { return a.opts[k]->count() > 0; };
  if (given("epochs")) cfg.epochs = a.cfg.epochs;
  if (given("lr")) cfg.learning_rate = a.cfg.learning_rate;
  if (given("lambda")) cfg.augment.lambda = a.cfg.augment.lambda;
  if (given("m")) cfg.augment.per_sample = a.cfg.augment.per_sample;
  if (given("loss")) cfg.loss.kind = iaa::loss_kind_from(a.loss);
  if (given("baseline")) cfg.baseline = true;
  resolve_seed(cfg.seed, a.opts["seed"], a.cfg.seed, file);
  cfg.validate();
  if (a.common.print_config) {
    std::cout << dump(iaa::to_json(cfg));
    return 0;
  }

  const auto data = load_data(a.input, a.header);
  std::optional<iaa::Dataset> holdout;
  if (!a.holdout.empty()) {
    holdout = load_data(a.holdout, a.header);
    if (holdout->dim() != data.dim())
      throw iaa::DataError("held-out data dimension differs from training data");
  }
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, std::ios::binary | std::ios::trunc);
    if (!log)
      throw iaa::DataError("cannot write '" + a.log + "'");
  }
  auto hook = [&](const iaa::EpochRecord &r) {
    if (log.is_open())
      log << iaa::to_json(r, a.timing).dump() << "\n" << std::flush;
    if (a.common.human) {
      std::cout << "epoch " << r.epoch << " loss " << r.loss_mean;
      if (r.eval && r.eval->recall.count(1))
        std::cout << " R@1 " << r.eval->recall.at(1);
      std::cout << "\n";
    }
  };
  const auto result = iaa::train(data, cfg, holdout ? &*holdout : nullptr, hook);
  iaa::save_encoder(result.encoder, a.output);

  if (a.common.human)
    return 0;
  Json summary = {{"encoder", a.output}, {"epochs", result.log.epochs.size()}, {"seed", cfg.seed}};
  if (!result.log.epochs.empty()) {
    const auto &last = result.log.epochs.back();
    summary["final_loss"] = last.loss_mean;
    if (last.eval)
      summary["final_eval"] = iaa::retrieval_json(last.eval->recall, last.eval->r_precision, last.eval->map_at_r,
                                                  last.eval->n_queries);
  }
  std::cout << dump(summary);
  return 0;
}

struct EvalArgs {
  Common common;
  std::string input, gallery, encoder, output;
  bool header = false;
};

void setup_eval(CLI::App &root, EvalArgs &a) {
  auto *app = root.add_subcommand("eval", "Recall@K, R-precision and MAP@R");
  add_common(app, a.common, false);
  app->add_option("input", a.input, "Queries (and gallery unless --gallery is given)")->required();
  app->add_option("--gallery", a.gallery, "Separate gallery dataset");
  app->add_option("--encoder", a.encoder, "Embed inputs with this encoder first");
  app->add_flag("--header", a.header, "CSV inputs have a header line");
  app->add_option("-o,--output", a.output, "Metrics JSON (default: stdout)");
}

int run_eval(EvalArgs &a) {
  const auto queries = encoded(load_data(a.input, a.header), a.encoder);
  iaa::RetrievalResult r;
  const std::vector<std::size_t> wanted = {1, 2, 4, 8};
  std::vector<std::size_t> ks;
  if (a.gallery.empty()) {
    for (auto k : wanted)
      if (k < queries.size())
        ks.push_back(k);
    r = iaa::evaluate_retrieval(queries.embeddings(), queries.labels(), ks);
  } else {
    const auto gallery = encoded(load_data(a.gallery, a.header), a.encoder);
    if (gallery.dim() != queries.dim())
      throw iaa::DataError("query and gallery dimensions differ");
    std::map<std::int64_t, iaa::ClassId> ids;
    auto relabel = [&](const iaa::Dataset &d) {
      std::vector<iaa::ClassId> out;
      for (auto raw : d.raw_labels())
        out.push_back(ids.try_emplace(raw, static_cast<iaa::ClassId>(ids.size() + 1)).first->second);
      return out;
    };
    const auto ql = relabel(queries);
    const auto gl = relabel(gallery);
    for (auto k : wanted)
      if (k <= gallery.size())
        ks.push_back(k);
    r = iaa::evaluate_retrieval(queries.embeddings(), ql, gallery.embeddings(), gl, ks, false);
  }
  const Json j = iaa::retrieval_json(r.recall, r.r_precision, r.map_at_r, r.n_queries);
  if (!a.output.empty() || !a.common.human) {
    write_text(a.output, dump(j));
    return 0;
  }
  for (auto &[k, v] : r.recall)
    std::cout << "R@" << k << " " << v << "\n";
  std::cout << "RP " << r.r_precision << "\nMAP@R " << r.map_at_r << "\nqueries " << r.n_queries << "\n";
  return 0;
}

struct HistogramArgs {
  Common common;
  std::string input, encoder, output;
  std::size_t bins = 100;
  bool header = false;
};

void setup_histogram(CLI::App &root, HistogramArgs &a) {
  auto *app = root.add_subcommand("histogram", "Positive/negative pair cosine similarity histogram");
  add_common(app, a.common, false);
  app->add_option("input", a.input, "Embeddings dataset")->required();
  app->add_option("--encoder", a.encoder, "Embed inputs with this encoder first");
  app->add_option("--bins", a.bins, "Bin count over [-1, 1]")->check(CLI::PositiveNumber);
  app->add_flag("--header", a.header, "CSV input has a header line");
  app->add_option("-o,--output", a.output, "CSV output (default: stdout)");
}

int run_histogram(HistogramArgs &a) {
  const auto data = encoded(load_data(a.input, a.header), a.encoder);
  const auto h = iaa::similarity_histogram(data.embeddings(), data.labels(), a.bins);
  write_text(a.output, iaa::histogram_csv(h));
  return 0;
}

int fail(int code, const std::string &kind, const std::string &message) {
  std::cerr << Json{{"error", {{"kind", kind}, {"message", message}, {"exit_code", code}}}}.dump() << "\n";
  return code;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Intra-class adaptive augmentation toolkit"};
  app.require_subcommand(1);
  SynthArgs synth;
  StatsArgs stats;
  CorrectArgs correct;
  CorrelateArgs correlate;
  GenerateArgs generate;
  TrainArgs train;
  EvalArgs eval;
  HistogramArgs histogram;
  setup_synth(app, synth);
  setup_stats(app, stats);
  setup_correct(app, correct);
  setup_correlate(app, correlate);
  setup_generate(app, generate);
  setup_train(app, train);
  setup_eval(app, eval);
  setup_histogram(app, histogram);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail(kExitConfig, "config", e.what());
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    auto threads = [](const Common &c) { iaa::set_thread_cap(c.threads); };
    if (cmd == "synth") return threads(synth.common), run_synth(synth);
    if (cmd == "stats") return threads(stats.common), run_stats(stats);
    if (cmd == "correct") return threads(correct.common), run_correct(correct);
    if (cmd == "correlate") return threads(correlate.common), run_correlate(correlate);
    if (cmd == "generate") return threads(generate.common), run_generate(generate);
    if (cmd == "train") return threads(train.common), run_train(train);
    if (cmd == "eval") return threads(eval.common), run_eval(eval);
    if (cmd == "histogram") return threads(histogram.common), run_histogram(histogram);
    return fail(kExitConfig, "config", "unknown subcommand " + cmd);
  } catch (const iaa::Error &e) {
    const int code = e.kind() == iaa::ErrorKind::config ? kExitConfig
                     : e.kind() == iaa::ErrorKind::data ? kExitData
                                                        : kExitNumerical;
    return fail(code, iaa::to_string(e.kind()), e.what());
  } catch (const Json::exception &e) {
    return fail(kExitData, "data", e.what());
  } catch (const std::exception &e) {
    return fail(kExitData, "data", e.what());
  }
}
