// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "iaa/iaa.hpp"
#include "oracles.hpp"

using namespace iaa;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kStatsRelTol = 1e-12;
constexpr double kStatsBudget = 5.0;
constexpr double kLossAbsTol = 1e-10;
constexpr double kLossBudget = 10.0;
constexpr double kGradStep = 1e-5;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradBudget = 30.0;
constexpr double kAlphaTol = 1e-12;
constexpr double kVarRelTol = 0.03;
constexpr double kMeanAbsTol = 0.02;
constexpr double kRhoCoupled = 0.9;
constexpr double kRhoIndependent = 0.2;
constexpr double kCorrelationBudget = 10.0;
constexpr double kCorrectionGapTol = 1e-12;
constexpr double kCorrectionBudget = 60.0;
constexpr int kEndToEndWins = 4;
constexpr double kEndToEndBudget = 300.0;
constexpr double kChanceLow = 0.45;
constexpr double kChanceHigh = 0.55;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

/// Max-norm relative error of `got` against `ref`.
double rel_error(const std::vector<double> &got, const std::vector<double> &ref) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    diff = std::max(diff, std::abs(got[i] - ref[i]));
    scale = std::max(scale, std::abs(ref[i]));
  }
  return scale > 0 ? diff / scale : diff;
}

LossConfig loss_config(LossKind kind) {
  LossConfig c;
  c.kind = kind;
  c.pos_margin = 0.3;
  c.neg_margin = 1.1;
  c.triplet_margin = 0.3;
  c.ms_beta = 10.0;
  c.ms_epsilon = 0.2;
  return c;
}

const LossKind kLosses[] = {LossKind::contrastive, LossKind::triplet, LossKind::ms};

Outcome stats_oracle() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> rows(2, 500), dims(1, 32);
  std::uniform_int_distribution<int> classes(1, 12);
  std::normal_distribution<double> offset(0.0, 5.0);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = rows(rng), d = dims(rng);
    const int c = classes(rng);
    std::uniform_int_distribution<int> cls(0, c - 1);
    RowMatrix x = oracle::gaussian(n, d, rng, 2.0);
    std::vector<std::int64_t> labels;
    for (std::size_t i = 0; i < n; ++i)
      labels.push_back(7 * cls(rng) + 3);
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      x.col(j).array() += offset(rng);
    const auto data = Dataset::from_raw(x, labels);
    const auto ref = oracle::class_moments(oracle::rows_of(x), labels);
    const auto full = estimate_class_stats(data, CovarianceMode::full);
    const auto diag = estimate_class_stats(data, CovarianceMode::diagonal);
    if (full.size() != ref.size())
      return {false, "class count mismatch"};
    for (std::size_t k = 0; k < ref.size(); ++k) {
      if (full[k].count != ref[k].n || diag[k].count != ref[k].n)
        return {false, "sample count mismatch"};
      std::vector<double> m(full[k].mean.data(), full[k].mean.data() + d);
      worst = std::max(worst, rel_error(m, ref[k].mean));
      std::vector<double> cov, var, ref_cov, ref_var;
      for (std::size_t a = 0; a < d; ++a) {
        var.push_back(diag[k].cov.values(static_cast<Eigen::Index>(a), 0));
        ref_var.push_back(ref[k].cov[a][a]);
        for (std::size_t b = 0; b < d; ++b) {
          cov.push_back(full[k].cov.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
          ref_cov.push_back(ref[k].cov[a][b]);
        }
      }
      worst = std::max({worst, rel_error(cov, ref_cov), rel_error(var, ref_var)});
    }
  }
  return {worst < kStatsRelTol, "max relative error " + fmt(worst)};
}

Outcome loss_oracle() {
  std::mt19937_64 rng(1002);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto b = oracle::random_batch(rng, 16, static_cast<std::size_t>(t % 4), 6, 0.15, t % 5 != 0);
    for (auto kind : kLosses) {
      const auto cfg = loss_config(kind);
      worst = std::max(worst, std::abs(evaluate_loss(b, cfg).value - oracle::loss(oracle::plain(b), cfg)));
    }
  }
  return {worst < kLossAbsTol, "max abs error " + fmt(worst)};
}

Outcome gradient_check() {
  std::mt19937_64 rng(1003);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const auto b = oracle::random_batch(rng, 10, 1 + static_cast<std::size_t>(t % 3), 5, 0.2, t % 2 == 0);
    for (auto kind : kLosses) {
      const auto cfg = loss_config(kind);
      const auto analytic = evaluate_loss(b, cfg).gradients;
      const auto numeric = oracle::numeric_gradient(oracle::plain(b), cfg, kGradStep);
      std::vector<double> got, ref;
      for (Eigen::Index i = 0; i < analytic.rows(); ++i)
        for (Eigen::Index d = 0; d < analytic.cols(); ++d) {
          got.push_back(analytic(i, d));
          ref.push_back(numeric[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)]);
        }
      worst = std::max(worst, rel_error(got, ref));
    }
  }
  return {worst < kGradRelTol, "max relative error " + fmt(worst)};
}

Outcome alpha_properties() {
  bool ok = alpha(1, 0.1, 40) == 1.0;
  for (double beta : {0.01, 0.1, 1.0, 10.0})
    for (std::size_t tau : {1u, 5u, 40u, 200u}) {
      ok = ok && alpha(1, beta, tau) == 1.0;
      ok = ok && alpha(tau + 1, beta, tau) == 0.0 && alpha(tau + 50, beta, tau) == 0.0;
      for (std::size_t n = 2; n <= tau; ++n)
        ok = ok && alpha(n, beta, tau) <= alpha(n - 1, beta, tau);
    }
  const double ref = 1.0 / (1.0 + std::log(1.4));
  const double err = std::abs(alpha(5, 0.1, 40) - ref);
  return {ok && err < kAlphaTol, "alpha(5, 0.1) error " + fmt(err)};
}

std::vector<ClassStats> random_stats(std::mt19937_64 &rng, std::size_t C, std::size_t D, CovarianceMode mode,
                                     std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> count(lo, hi);
  std::vector<ClassStats> out;
  for (std::size_t k = 0; k < C; ++k) {
    ClassStats s;
    s.class_id = static_cast<ClassId>(k + 1);
    s.count = count(rng);
    s.mean = 0.5 * oracle::gaussian(1, D, rng).row(0).transpose();
    const Eigen::MatrixXd a = oracle::gaussian(D, D, rng, 0.4);
    s.cov = mode == CovarianceMode::full ? Covariance{mode, a * a.transpose()}
                                         : Covariance{mode, Eigen::MatrixXd(a.col(0).cwiseAbs2())};
    out.push_back(s);
  }
  return out;
}

Outcome degeneration() {
  std::mt19937_64 rng(1005);
  bool keep = true, global_ok = true, weights_ok = true;
  for (auto mode : {CovarianceMode::diagonal, CovarianceMode::full}) {
    // every class above tau: alpha = 0
    auto big = random_stats(rng, 12, 4, mode, 41, 90);
    auto out = correct_covariance(big, estimate_global_covariance(big), {});
    for (std::size_t k = 0; k < big.size(); ++k)
      keep = keep && out.corrections[k].alpha == 0.0 && out.classes[k].cov.values == big[k].cov.values;

    // singletons: alpha = 1, and gamma = 1 leaves only the global covariance
    auto single = random_stats(rng, 12, 4, mode, 1, 1);
    const auto global = estimate_global_covariance(single);
    CorrectionConfig cfg;
    cfg.gamma = 1.0;
    out = correct_covariance(single, global, cfg);
    for (std::size_t k = 0; k < single.size(); ++k)
      global_ok = global_ok && out.corrections[k].alpha == 1.0 && out.classes[k].cov.values == global.cov.values;

    auto mixed = random_stats(rng, 15, 4, mode, 1, 60);
    cfg = {};
    cfg.neighbors = 6;
    cfg.sigma_m = cfg.sigma_cv = std::numeric_limits<double>::infinity();
    out = correct_covariance(mixed, estimate_global_covariance(mixed), cfg);
    for (const auto &c : out.corrections)
      for (std::size_t t = 0; t < c.neighbors.size(); ++t)
        weights_ok = weights_ok && c.weights[t] == static_cast<double>(mixed[c.neighbors[t] - 1].count);
  }
  return {keep && global_ok && weights_ok, std::string("alpha=0 keep ") + (keep ? "ok" : "broken") +
                                               ", gamma=1 global " + (global_ok ? "ok" : "broken") +
                                               ", infinite sigma weights " + (weights_ok ? "ok" : "broken")};
}

Outcome generation_moments() {
  ClassStats s;
  s.class_id = 1;
  s.count = 10;
  s.mean = Vector::Zero(2);
  s.cov = Covariance{CovarianceMode::diagonal, Eigen::MatrixXd(Eigen::Vector2d(1.0, 4.0))};
  AugmentConfig cfg;
  cfg.lambda = 0.5;
  cfg.per_sample = 100000;
  cfg.renormalize = false;
  cfg.seed = 1006;
  const RowMatrix origin = RowMatrix::Zero(1, 2);
  const auto syn = generate_dynamic(origin, {1}, {s}, cfg);
  const Vector mean = syn.samples.colwise().mean();
  const Vector var = (syn.samples.rowwise() - mean.transpose()).array().square().colwise().mean();
  const double var_err = std::max(std::abs(var(0) / 0.5 - 1.0), std::abs(var(1) / 2.0 - 1.0));
  const double mean_err = mean.cwiseAbs().maxCoeff();

  std::mt19937_64 rng(1006);
  const RowMatrix z = oracle::gaussian(20, 2, rng);
  cfg.lambda = 0.0;
  cfg.per_sample = 4;
  const auto still = generate_dynamic(z, std::vector<ClassId>(20, 1), {s}, cfg);
  bool exact = still.size() == 80;
  for (std::size_t r = 0; exact && r < still.size(); ++r)
    exact = still.samples.row(static_cast<Eigen::Index>(r)) == z.row(static_cast<Eigen::Index>(r / 4));
  return {var_err < kVarRelTol && mean_err < kMeanAbsTol && exact,
          "variance rel error " + fmt(var_err) + ", mean error " + fmt(mean_err) + ", lambda=0 " +
              (exact ? "exact" : "inexact")};
}

WorldConfig correlation_world(double knob, std::uint64_t seed, std::size_t n) {
  WorldConfig wc;
  wc.classes = 50;
  wc.embedding_dim = 16;
  wc.input_dim = 16;
  wc.corr_knob = knob;
  wc.min_samples = n;
  wc.max_samples = n;
  wc.seed = seed;
  return wc;
}

Outcome correlation_discovery() {
  double coupled = 0, independent = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    for (double knob : {1.0, 0.0}) {
      const auto w = make_synthetic_world(correlation_world(knob, 1007 + s, 400));
      const double rho = correlation_report(estimate_class_stats(w.train, CovarianceMode::diagonal)).mean_rho;
      (knob == 1.0 ? coupled : independent) += rho / 5.0;
    }
  }
  return {coupled > kRhoCoupled && std::abs(independent) < kRhoIndependent,
          "mean rho coupled " + fmt(coupled) + ", independent " + fmt(independent)};
}

std::pair<double, double> covariance_errors(std::size_t lo, std::size_t hi, std::uint64_t seed) {
  WorldConfig wc;
  wc.classes = 50;
  wc.embedding_dim = 16;
  wc.input_dim = 16;
  wc.min_samples = lo;
  wc.max_samples = hi;
  wc.seed = seed;
  const auto w = make_synthetic_world(wc);
  const auto stats = estimate_class_stats(w.train, CovarianceMode::full);
  const auto corrected = correct_covariance(stats, estimate_global_covariance(stats), {});
  double raw = 0, cor = 0, entries = 0;
  for (std::size_t k = 0; k < stats.size(); ++k) {
    const Eigen::MatrixXd truth = w.truth[k].variance.asDiagonal();
    raw += (stats[k].cov.values - truth).squaredNorm();
    cor += (corrected.classes[k].cov.values - truth).squaredNorm();
    entries += static_cast<double>(truth.size());
  }
  return {raw / entries, cor / entries};
}

Outcome correction_benefit() {
  double raw_small = 0, cor_small = 0, raw_big = 0, cor_big = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto [rs, cs] = covariance_errors(2, 5, 1008 + s);
    const auto [rb, cb] = covariance_errors(50, 60, 2008 + s);
    raw_small += rs / 20;
    cor_small += cs / 20;
    raw_big += rb / 20;
    cor_big += cb / 20;
  }
  const double gap = std::abs(raw_big - cor_big) / raw_big;
  return {cor_small < raw_small && gap < kCorrectionGapTol,
          "n in [2,5]: raw " + fmt(raw_small) + " corrected " + fmt(cor_small) + "; n in [50,60] relative gap " +
              fmt(gap)};
}

Outcome end_to_end() {
  int wins = 0;
  double gain = 0;
  std::string per;
  for (std::uint64_t s = 0; s < 5; ++s) {
    WorldConfig wc;
    wc.classes = 20;
    wc.input_dim = 32;
    wc.embedding_dim = 16;
    wc.min_samples = 3;
    wc.max_samples = 8;
    wc.corr_knob = 1.0;
    wc.variance_scale = 1.0;
    wc.input_noise = 0.1;
    wc.holdout_classes = 20;
    wc.seed = 1000 + s;
    const auto w = make_synthetic_world(wc);
    TrainConfig tc;
    tc.epochs = 40;
    tc.learning_rate = 1e-3;
    tc.encoder.architecture = Architecture::mlp;
    tc.encoder.embedding_dim = 16;
    tc.loss.kind = LossKind::triplet;
    tc.seed = s;
    TrainConfig base = tc;
    base.baseline = true;
    const double b = train(w.train, base, &*w.holdout).log.epochs.back().eval->recall.at(1);
    const double i = train(w.train, tc, &*w.holdout).log.epochs.back().eval->recall.at(1);
    wins += i >= b;
    gain += (i - b) / 5.0;
    per += (per.empty() ? "" : " ") + fmt(b) + "->" + fmt(i);
  }
  return {wins >= kEndToEndWins && gain > 0.0,
          std::to_string(wins) + "/5 seeds >= baseline, mean R@1 gain " + fmt(gain) + " [" + per + "]"};
}

Outcome zero_synthetics() {
  WorldConfig wc;
  wc.classes = 10;
  wc.input_dim = 12;
  wc.embedding_dim = 6;
  wc.holdout_classes = 5;
  wc.seed = 1010;
  const auto w = make_synthetic_world(wc);
  bool same = true;
  for (auto kind : kLosses) {
    TrainConfig tc;
    tc.epochs = 8;
    tc.classes_per_batch = 4;
    tc.samples_per_class = 3;
    tc.encoder.embedding_dim = 6;
    tc.loss.kind = kind;
    tc.seed = 10;
    tc.augment.per_sample = 0;
    TrainConfig base = tc;
    base.baseline = true;
    const auto a = train(w.train, tc, &*w.holdout);
    const auto b = train(w.train, base, &*w.holdout);
    same = same && a.encoder.parameters() == b.encoder.parameters();
    for (std::size_t e = 0; same && e < a.log.epochs.size(); ++e)
      same = a.log.epochs[e].loss_mean == b.log.epochs[e].loss_mean &&
             a.log.epochs[e].eval->map_at_r == b.log.epochs[e].eval->map_at_r;
  }
  return {same, same ? "parameters and logs identical for all three losses" : "runs differ"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(1011);
  std::uniform_int_distribution<std::size_t> size(9, 50);
  std::uniform_int_distribution<int> cls(1, 5);
  bool exact = true, ordered = true;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = size(rng);
    const RowMatrix x = oracle::gaussian(n, 3, rng);
    std::vector<ClassId> labels;
    for (std::size_t i = 0; i < n; ++i)
      labels.push_back(cls(rng));
    const std::vector<std::size_t> ks{1, 2, 4, 8};
    const auto got = evaluate_retrieval(x, labels, ks);
    const auto ref = oracle::retrieval(oracle::rows_of(x), std::vector<int>(labels.begin(), labels.end()), ks);
    exact = exact && got.n_queries == ref.queries && got.r_precision == ref.rp && got.map_at_r == ref.map_at_r;
    for (auto k : ks)
      exact = exact && got.recall.at(k) == ref.recall.at(k);
    ordered = ordered && got.map_at_r <= got.r_precision;
  }
  const RowMatrix x = oracle::gaussian(2000, 8, rng);
  std::vector<ClassId> labels;
  for (int i = 0; i < 2000; ++i)
    labels.push_back(i % 2 + 1);
  std::shuffle(labels.begin(), labels.end(), rng);
  const double r1 = recall_at_k(x, labels, 1);
  return {exact && ordered && r1 >= kChanceLow && r1 <= kChanceHigh,
          std::string("oracles ") + (exact ? "exact" : "differ") + ", MAP@R <= RP " + (ordered ? "holds" : "violated") +
              ", shuffled R@1 " + fmt(r1)};
}

struct Shell {
  int code = 0;
  std::string out;
};

Shell shell(const std::string &cmd) {
  Shell r;
  FILE *p = popen(cmd.c_str(), "r");
  if (!p)
    return {-1, ""};
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0)
    r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Runs every subcommand in `dir`; returns stdout of each step plus all files.
std::map<std::string, std::string> cli_pipeline(const fs::path &dir, const std::string &threads, std::string &error) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string extra = threads.empty() ? "" : " --threads " + threads;
  const std::vector<std::pair<std::string, std::string>> steps{
      {"synth", "synth --classes 12 --dim 6 --corr 1 --seed 3 -o w.iaad"},
      {"synth_train", "synth --classes 10 --dim 6 --input-dim 12 --seed 4 --noise 0.05 --holdout-classes 6 "
                      "--holdout-output h.iaad -o t.iaad"},
      {"stats", "stats w.iaad --mode full -o s.json"},
      {"correct", "correct s.json --k 4 -o c.json"},
      {"correlate", "correlate c.json --curves curves.csv -o r.json"},
      {"generate", "generate w.iaad --stats c.json --m 3 --seed 5 -o g.iaad"},
      {"generate_fixed", "generate w.iaad --stats c.json --m 2 --strategy fixed --seed 6 -o f.csv"},
      {"train", "train t.iaad --holdout h.iaad --epochs 6 --seed 7 -o e.bin --log log.jsonl"},
      {"eval", "eval h.iaad --encoder e.bin -o m.json"},
      {"histogram", "histogram h.iaad --encoder e.bin --bins 40 -o hist.csv"},
  };
  std::map<std::string, std::string> out;
  for (const auto &[name, args] : steps) {
    const auto r = shell("cd '" + dir.string() + "' && " + IAA_CLI_PATH + " " + args + extra + " 2>&1");
    if (r.code != 0) {
      error = name + " exited with " + std::to_string(r.code) + ": " + r.out;
      return {};
    }
    out["stdout:" + name] = r.out;
  }
  for (const auto &entry : fs::directory_iterator(dir))
    out["file:" + entry.path().filename().string()] = slurp(entry.path());
  return out;
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "iaa_acceptance_cli";
  std::string error;
  const auto a = cli_pipeline(root / "a", "", error);
  const auto b = cli_pipeline(root / "b", "", error);
  const auto c = cli_pipeline(root / "c", "4", error);
  fs::remove_all(root);
  if (!error.empty())
    return {false, error};
  if (a.size() < 16)
    return {false, "pipeline produced too few outputs"};
  for (const auto &[key, bytes] : a) {
    if (!b.count(key) || b.at(key) != bytes)
      return {false, key + " differs between consecutive runs"};
    if (!c.count(key) || c.at(key) != bytes)
      return {false, key + " differs under --threads 4"};
  }
  if (a.size() != b.size() || a.size() != c.size())
    return {false, "runs produced different file sets"};
  return {true, std::to_string(a.size()) + " outputs byte-identical across 3 runs (threads 1, 1, 4)"};
}

} // namespace

int main() {
  struct Criterion {
    const char *name;
    std::function<Outcome()> run;
    double budget;  // seconds, 0 when unbounded
  };
  const std::vector<Criterion> criteria{
      {"stats oracle", stats_oracle, kStatsBudget},
      {"loss oracles", loss_oracle, kLossBudget},
      {"gradient check", gradient_check, kGradBudget},
      {"neighbor weight function", alpha_properties, 0},
      {"degeneration identities", degeneration, 0},
      {"generation moments", generation_moments, 0},
      {"correlation discovery", correlation_discovery, kCorrelationBudget},
      {"correction benefit", correction_benefit, kCorrectionBudget},
      {"end-to-end benefit", end_to_end, kEndToEndBudget},
      {"zero-synthetic reduction", zero_synthetics, 0},
      {"metric oracles", metric_oracles, 0},
      {"cli determinism", cli_determinism, 0},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto &c = criteria[i];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget > 0 && secs >= c.budget) {
      o.pass = false;
      o.detail += "; over budget of " + fmt(c.budget) + " s";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << c.name << ": " << o.detail << " ("
              << fmt(secs) << " s)" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
