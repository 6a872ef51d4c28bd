// Command-line front end: simulate, sample, tables, convergence, selftest.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qpost/qpost.hpp"
#include "qpost/selftest.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace qpost;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

const char* kSchemaHint =
    "config files are 'key = value' lines ('#' comments, optional [section] headers).\n"
    "required: dgp.model = linreg | lin_re | probit_re | median\n"
    "see configs/ and the README for the full key list.";

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

/// Collects written artifacts so the manifest can list their checksums.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  void write(const std::string& rel, const std::string& bytes) {
    const fs::path p = dir_ / rel;
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << bytes;
    checksums_[rel] = sha256_hex(bytes);
  }

  void manifest(const ExperimentConfig& c, const std::string& command) {
    json m;
    m["command"] = command;
    m["seed"] = c.seed;
    json cfg = json::object();
    for (const auto& [k, v] : config_entries(c)) cfg[k] = v;
    m["config"] = cfg;
    json files = json::object();
    for (const auto& [k, v] : checksums_) files[k] = {{"sha256", v}};
    m["artifacts"] = files;
    const fs::path p = dir_ / "manifest.json";
    std::ofstream(p) << m.dump(2) << "\n";
  }

  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  std::map<std::string, std::string> checksums_;
};

struct CommonOptions {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::size_t> replications;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool need_out = true) {
  cmd->add_option("-c,--config", o.config, "experiment config file")->required();
  if (need_out) cmd->add_option("-o,--out", o.out, "output directory (default: out/<name>)");
  cmd->add_option("--set", o.overrides, "override a config key, key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--workers", o.workers, "worker threads");
  cmd->add_option("--replications", o.replications, "number of replications");
  cmd->add_flag("-q,--quiet", o.quiet, "no progress output");
}

ExperimentConfig resolve(const CommonOptions& o) {
  if (!fs::exists(o.config)) throw ConfigError("config file '" + o.config + "' does not exist");
  ExperimentConfig c = load_config(o.config);
  for (const auto& kv : o.overrides) apply_override(c, kv);
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.replications) c.replications = *o.replications;
  c.validate();
  return c;
}

fs::path out_dir(const CommonOptions& o, const ExperimentConfig& c) {
  return o.out.empty() ? fs::path("out") / c.name : fs::path(o.out);
}

std::string matrix_csv(const Matrix& m, const std::vector<std::string>& names) {
  std::ostringstream os;
  for (std::size_t j = 0; j < names.size(); ++j) os << (j ? "," : "") << names[j];
  os << "\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << (j ? "," : "") << m(i, j);
    os << "\n";
  }
  return os.str();
}

json diagnostics_json(const ExperimentConfig& c, const ExperimentResult& r) {
  json d;
  d["name"] = c.name;
  d["replications"] = c.replications;
  d["workers"] = c.workers;
  d["seed"] = c.seed;
  d["elapsed_seconds"] = r.elapsed_seconds;
  d["pseudo_truth"] = r.report.pseudo_truth;
  json methods = json::array();
  for (const auto& m : r.report.methods) {
    json jm;
    jm["method"] = to_string(m.method);
    jm["successes"] = m.successes;
    jm["failures"] = m.failures;
    jm["mean_acceptance"] = m.mean_acceptance;
    if (m.mean_inner_acceptance) jm["mean_inner_acceptance"] = *m.mean_inner_acceptance;
    jm["nonfinite_rejections"] = m.nonfinite_rejections;
    json cov_se = json::object();
    for (const auto& cs : m.coords) cov_se[cs.name] = cs.cov_se;
    jm["coverage_se"] = cov_se;
    json errors = json::array();
    for (const auto& rep : r.replications)
      for (const auto& mo : rep.methods)
        if (mo.method == m.method && !mo.ok) errors.push_back({{"replication", rep.index}, {"error", mo.error}});
    jm["errors"] = errors;
    methods.push_back(jm);
  }
  d["methods"] = methods;
  json cfg = json::object();
  for (const auto& [k, v] : config_entries(c)) cfg[k] = v;
  d["config"] = cfg;
  return d;
}

int simulate(const CommonOptions& o) {
  const ExperimentConfig c = resolve(o);
  ArtifactWriter w(out_dir(o, c));
  ProgressFn progress;
  if (!o.quiet) {
    progress = [](std::size_t done, std::size_t total) {
      if (done == total || done % std::max<std::size_t>(1, total / 20) == 0)
        std::cerr << "\r  " << done << "/" << total << " replications" << (done == total ? "\n" : "") << std::flush;
    };
  }
  const ExperimentResult r = run_replications(c, progress);
  w.write("report.csv", emit_csv(r.report));
  w.write("report.txt", emit_text(r.report));
  w.write("diagnostics.json", diagnostics_json(c, r).dump(2) + "\n");
  if (c.save_traces) {
    for (const auto& rep : r.replications)
      for (const auto& mo : rep.methods)
        if (mo.retained)
          w.write("traces/rep" + std::to_string(rep.index) + "_" + to_string(mo.method) + ".csv",
                  matrix_csv(*mo.retained, coordinate_names(c)));
  }
  w.manifest(c, "simulate");
  std::cout << emit_text(r.report);
  check_failure_budget(c, r);
  return kOk;
}

/// Gaussian kernel density estimate on a grid, renormalized by the trapezoid rule.
std::vector<double> kde(const std::vector<double>& draws, const std::vector<double>& grid) {
  const double n = static_cast<double>(draws.size());
  double mean = 0.0;
  for (double v : draws) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : draws) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (n - 1.0));
  const double h = std::max(1.06 * sd * std::pow(n, -0.2), 1e-12);
  std::vector<double> dens(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double v : draws) s += normal::pdf((grid[g] - v) / h);
    dens[g] = s / (n * h);
  }
  double area = 0.0;
  for (std::size_t g = 1; g < grid.size(); ++g) area += 0.5 * (dens[g] + dens[g - 1]) * (grid[g] - grid[g - 1]);
  for (double& d : dens) d /= area;
  return dens;
}

int sample(const CommonOptions& o, std::size_t replication, std::size_t grid_points) {
  const ExperimentConfig c = resolve(o);
  ArtifactWriter w(out_dir(o, c));
  const std::uint64_t seed = replication_seed(c.seed, replication);
  Rng data_rng = make_rng(seed);
  const GeneratedData gen = generate(c.dgp, data_rng);
  std::ostringstream ds;
  write_dataset_csv(gen.data, ds);
  w.write("dataset.csv", ds.str());

  const auto names = coordinate_names(c);
  const auto p = static_cast<Eigen::Index>(names.size());
  std::vector<std::pair<Method, Matrix>> kept;
  std::vector<std::string> all_names;
  for (Method m : c.methods) {
    Rng rng = method_rng(seed, m);
    const ChainTrace t = detail::run_method(c, gen.data, m, rng);
    std::vector<std::string> cols;
    for (Eigen::Index j = 0; j < t.dim(); ++j) cols.push_back(j < p ? names[static_cast<std::size_t>(j)] : "aux" + std::to_string(j - p + 1));
    Matrix full(t.iterations(), t.dim() + 2);
    full.leftCols(t.dim()) = t.draws;
    for (Eigen::Index i = 0; i < t.iterations(); ++i) {
      full(i, t.dim()) = t.log_kernels[static_cast<std::size_t>(i)];
      full(i, t.dim() + 1) = t.accepted[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }
    cols.push_back("log_kernel");
    cols.push_back("accepted");
    w.write("traces/" + to_string(m) + ".csv", matrix_csv(full, cols));
    kept.emplace_back(m, t.retained().leftCols(p));
    std::cout << display_name(m) << ": acceptance " << t.acceptance_rate;
    if (t.diagnostics.inner_acceptance) std::cout << ", inner acceptance " << *t.diagnostics.inner_acceptance;
    std::cout << "\n";
  }

  std::ostringstream grid_csv;
  grid_csv << "coordinate,x";
  for (const auto& [m, _] : kept) grid_csv << "," << to_string(m);
  grid_csv << "\n" << std::setprecision(10);
  for (Eigen::Index j = 0; j < p; ++j) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& [m, d] : kept) {
      lo = std::min(lo, d.col(j).minCoeff());
      hi = std::max(hi, d.col(j).maxCoeff());
    }
    const double pad = 0.25 * (hi - lo) + 1e-9;
    std::vector<double> grid(grid_points);
    for (std::size_t g = 0; g < grid_points; ++g)
      grid[g] = lo - pad + (hi - lo + 2 * pad) * static_cast<double>(g) / static_cast<double>(grid_points - 1);
    std::vector<std::vector<double>> dens;
    for (const auto& [m, d] : kept) dens.push_back(kde(std::vector<double>(d.col(j).data(), d.col(j).data() + d.rows()), grid));
    for (std::size_t g = 0; g < grid_points; ++g) {
      grid_csv << names[static_cast<std::size_t>(j)] << "," << grid[g];
      for (const auto& dn : dens) grid_csv << "," << dn[g];
      grid_csv << "\n";
    }
    std::cout << names[static_cast<std::size_t>(j)] << ":";
    for (const auto& [m, d] : kept) {
      const ChainSummary s = summarize_chain(d.col(j));
      std::cout << "  " << display_name(m) << " mean " << s.mean(0) << " sd " << s.sd(0);
    }
    std::cout << "\n";
  }
  w.write("density_grid.csv", grid_csv.str());
  w.manifest(c, "sample");
  return kOk;
}

int tables(const std::string& dir, const std::string& out, const CommonOptions& base) {
  if (!fs::is_directory(dir)) throw ConfigError("config directory '" + dir + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().filename().string().rfind("table", 0) == 0 && e.path().extension() == ".toml") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no table*.toml configs in '" + dir + "'");
  int status = kOk;
  for (const auto& f : files) {
    CommonOptions o = base;
    o.config = f.string();
    o.out = (fs::path(out) / f.stem()).string();
    std::cout << "== " << f.filename().string() << "\n";
    try {
      if (simulate(o) != kOk) status = kFailed;
    } catch (const ExperimentError& e) {
      std::cerr << "experiment failed: " << e.what() << "\n";
      status = kFailed;
    }
  }
  return status;
}

int convergence(const CommonOptions& o, std::vector<std::size_t> grid, std::size_t reference,
                std::optional<std::size_t> iterations) {
  ExperimentConfig c = resolve(o);
  if (c.dgp.kind != ModelKind::lin_re && c.dgp.kind != ModelKind::probit_re)
    throw ConfigError("convergence needs a latent-variable model (lin_re or probit_re)");
  ArtifactWriter w(out_dir(o, c));
  Rng data_rng = make_rng(replication_seed(c.seed, 0));
  const GeneratedData gen = generate(c.dgp, data_rng);
  ConvergenceOptions opts;
  opts.grid = std::move(grid);
  opts.reference_n = reference;
  opts.seed = c.seed;
  opts.pm.fisher.composition = c.weight;
  opts.pm.include_det = c.resolved_include_det();
  opts.chain = c.chain;
  if (iterations) opts.chain.iterations = *iterations;
  const auto names = coordinate_names(c);
  opts.coordinates = static_cast<Eigen::Index>(names.size());

  auto emit = [&](const ConvergenceTable& t) {
    std::ostringstream os;
    os << "n_draws,coordinate,mean,sd,mean_mcse,mean_diff,sd_diff,noise\n" << std::setprecision(10);
    auto row = [&](const ConvergenceRow& r, bool ref) {
      for (std::size_t j = 0; j < names.size(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        os << r.n_draws << "," << names[j] << "," << r.summary.mean(jj) << "," << r.summary.sd(jj) << ","
           << r.summary.mean_mcse(jj) << "," << (ref ? 0.0 : r.mean_diff(jj)) << "," << (ref ? 0.0 : r.sd_diff(jj))
           << "," << (ref ? 0.0 : r.noise(jj)) << "\n";
      }
    };
    for (const auto& r : t.rows) row(r, false);
    row(t.reference, true);
    w.write("convergence.csv", os.str());
    const auto d = t.mean_discrepancy();
    for (std::size_t i = 0; i < d.size(); ++i)
      std::cout << "N=" << t.rows[i].n_draws << "  mean discrepancy " << d[i] << "  noise " << t.noise_band()[i] << "\n";
    std::cout << "log-log slope " << t.log_log_slope() << ", non-increasing within 2x noise: "
              << (t.non_increasing_within_noise() ? "yes" : "no") << "\n";
  };
  if (c.dgp.kind == ModelKind::lin_re) {
    const LinReModel model(gen.data, c.dgp.sigma2_alpha);
    emit(convergence_study(model, model.initial_point(), detail::proposal_for(c, model.proposal_scales()), opts));
  } else {
    const ProbitReModel model(gen.data, {c.q_estimate_sigma2_alpha, c.dgp.sigma2_alpha});
    emit(convergence_study(model, model.initial_point(), detail::proposal_for(c, model.proposal_scales()), opts));
  }
  w.manifest(c, "convergence");
  return kOk;
}

int selftest() {
  const auto results = run_selftest();
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
    std::cout << "\n";
    all = all && r.passed;
  }
  std::cout << (all ? "selftest passed" : "selftest FAILED") << "\n";
  return all ? kOk : kFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Q-posterior inference and replication studies"};
  app.require_subcommand(1);

  CommonOptions sim_opts;
  auto* sim = app.add_subcommand("simulate", "run a replication study and write report artifacts");
  add_common(sim, sim_opts);

  CommonOptions sample_opts;
  std::size_t replication = 0;
  std::size_t grid_points = 200;
  auto* smp = app.add_subcommand("sample", "run each method on one dataset; write traces and density grid");
  add_common(smp, sample_opts);
  smp->add_option("--replication", replication, "which replication's dataset to use");
  smp->add_option("--grid-points", grid_points, "density grid size")->check(CLI::Range(10, 100000));

  CommonOptions table_opts;
  std::string table_dir = "configs";
  std::string table_out = "out/tables";
  auto* tab = app.add_subcommand("tables", "run every configs/table*.toml study");
  tab->add_option("--config-dir", table_dir, "directory holding table*.toml");
  tab->add_option("-o,--out", table_out, "output root");
  tab->add_option("--set", table_opts.overrides, "override applied to every config");
  tab->add_option("--seed", table_opts.seed, "base seed");
  tab->add_option("--workers", table_opts.workers, "worker threads");
  tab->add_option("--replications", table_opts.replications, "number of replications");
  tab->add_flag("-q,--quiet", table_opts.quiet, "no progress output");

  CommonOptions conv_opts;
  std::vector<std::size_t> grid{1, 5, 25, 125};
  std::size_t reference = 1000;
  std::optional<std::size_t> conv_iterations;
  auto* conv = app.add_subcommand("convergence", "posterior discrepancy versus the number of latent draws");
  add_common(conv, conv_opts);
  conv->add_option("--grid", grid, "ascending latent draw counts")->delimiter(',');
  conv->add_option("--reference", reference, "reference draw count");
  conv->add_option("--iterations", conv_iterations, "chain length per N");

  app.add_subcommand("selftest", "fast invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return simulate(sim_opts);
    if (*smp) return sample(sample_opts, replication, grid_points);
    if (*tab) return tables(table_dir, table_out, table_opts);
    if (*conv) return convergence(conv_opts, grid, reference, conv_iterations);
    return selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n" << kSchemaHint << "\n";
    return kUsage;
  } catch (const ExperimentError& e) {
    std::cerr << "experiment failed: " << e.what() << "\n";
    return kFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailed;
  }
}
