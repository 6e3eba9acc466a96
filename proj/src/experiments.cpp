#include "mixfd/experiments.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mixfd/divergences.hpp"
#include "mixfd/eval.hpp"

namespace mixfd {

using nlohmann::json;

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::blindness_demo: return "blindness_demo";
    case ExperimentKind::mfd_demo: return "mfd_demo";
    case ExperimentKind::train_2d: return "train_2d";
    case ExperimentKind::anneal_demo: return "anneal_demo";
  }
  return "unknown";
}

ExperimentKind experiment_from_string(const std::string& name) {
  std::string n = name;
  std::replace(n.begin(), n.end(), '-', '_');
  if (n == "blindness_demo") return ExperimentKind::blindness_demo;
  if (n == "mfd_demo") return ExperimentKind::mfd_demo;
  if (n == "train_2d" || n == "train") return ExperimentKind::train_2d;
  if (n == "anneal_demo") return ExperimentKind::anneal_demo;
  throw ConfigError("unknown experiment '" + name + "'");
}

Profile profile_from_string(const std::string& name) {
  if (name == "desk") return Profile::desk;
  if (name == "paper") return Profile::paper;
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + stream + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

AnalyticDensity named_target(const json& spec, std::string& name_out, double mu, double sigma,
                             double alpha_p) {
  if (spec.is_object()) {
    name_out = "custom";
    try {
      return density_from_json(spec);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid inline target: ") + e.what());
    }
  }
  if (!spec.is_string()) throw ConfigError("target must be a name or an inline density spec");
  name_out = spec.get<std::string>();
  if (name_out == "four_gaussians") return four_gaussians();
  if (name_out == "rings" || name_out == "concentric_rings") return concentric_rings();
  if (name_out == "toy_1d") return toy_mixture_1d(alpha_p, mu, sigma);
  throw ConfigError("unknown target '" + name_out + "' (expected four_gaussians, rings, toy_1d or an inline spec)");
}

QuadratureGrid grid_from_json(const json& j, int dim) {
  QuadratureGrid g = QuadratureGrid::standard(dim);
  if (!j.contains("grid")) return g;
  const json& s = j.at("grid");
  try {
    if (s.contains("lower")) g.lower = Eigen::Map<const Vector>(s.at("lower").get<std::vector<double>>().data(), dim);
    if (s.contains("upper")) g.upper = Eigen::Map<const Vector>(s.at("upper").get<std::vector<double>>().data(), dim);
    if (s.contains("points")) g.points_per_axis = s.at("points").get<int>();
    if (s.contains("lower") && s.at("lower").size() != static_cast<std::size_t>(dim)) throw ConfigError("grid.lower has the wrong dimension");
    if (s.contains("upper") && s.at("upper").size() != static_cast<std::size_t>(dim)) throw ConfigError("grid.upper has the wrong dimension");
    g.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config key 'grid': ") + e.what());
  }
  return g;
}

json grid_json(const QuadratureGrid& g) {
  return {{"lower", std::vector<double>(g.lower.data(), g.lower.data() + g.lower.size())},
          {"upper", std::vector<double>(g.upper.data(), g.upper.data() + g.upper.size())},
          {"points", g.points_per_axis}};
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "experiment", "seed", "output_dir", "target", "mu", "sigma", "alpha_p", "alpha_q",
      "alpha_start", "alpha_stop", "alpha_step", "mixing", "mixing_beta", "method", "beta",
      "iterations", "batch_size", "learning_rate", "anneal_start_std", "anneal_decay", "hidden",
      "activation", "data_size", "kl_samples", "export_points", "snapshot_every", "compare",
      "grid"};
  return keys;
}

using Rows = std::vector<std::vector<double>>;

std::string csv(const std::string& header, const Rows& rows) {
  std::ostringstream os;
  os << header << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
    os << '\n';
  }
  return os.str();
}

class ArtifactWriter {
 public:
  explicit ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  void write(const std::string& name, const std::string& content) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary);
    os << content;
    if (!os) throw std::runtime_error("cannot write " + path.string());
    if (name != "summary.json") artifacts_.push_back(name);
  }

  const std::vector<std::string>& artifacts() const { return artifacts_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> artifacts_;
};

json versions() {
  return {{"mixfd", "0.1.0"},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                        "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"compiler", __VERSION__}};
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

ExperimentResult finish(const ExperimentConfig& cfg, ArtifactWriter& out, json metrics,
                        std::vector<std::string> failed) {
  json hashed = cfg.resolved;
  hashed.erase("output_dir");
  ExperimentResult r;
  r.summary = {{"experiment", to_string(cfg.experiment)},
               {"seed", cfg.seed},
               {"config_hash", hex(fnv1a(hashed.dump()))},
               {"config", cfg.resolved},
               {"metrics", std::move(metrics)},
               {"artifacts", out.artifacts()},
               {"self_checks", {{"passed", failed.empty()}, {"failed", failed}}},
               {"versions", versions()}};
  r.failed_checks = std::move(failed);
  out.write("summary.json", r.summary.dump(2) + "\n");
  return r;
}

AnalyticDensity normal_1d(double mean, double sd) {
  return GaussianComponent::isotropic(Vector::Constant(1, mean), sd * sd);
}

CurveConfig fd_curve_config(const AnalyticDensity& g1, const AnalyticDensity& g2,
                            const QuadratureGrid& grid) {
  CurveConfig cfg{g1, g2, Estimator::fd_quadrature, grid, std::nullopt};
  return cfg;
}

std::vector<double> alphas_of(const ExperimentConfig& c) {
  return alpha_grid(c.alpha_start, c.alpha_stop, c.alpha_step);
}

bool all_valid(const std::vector<CurvePoint>& c) {
  return std::all_of(c.begin(), c.end(),
                     [](const CurvePoint& p) { return std::isfinite(p.value) && p.value >= -1e-12; });
}

QuadratureGrid export_grid(const QuadratureGrid& g, std::size_t points) {
  QuadratureGrid e = g;
  e.points_per_axis = static_cast<int>(points);
  e.validate();
  return e;
}

Rows grid_rows(const std::vector<GridRow>& rows) {
  Rows out;
  out.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.y) out.push_back({r.x, *r.y, r.value});
    else out.push_back({r.x, r.value});
  }
  return out;
}

std::string density_header(int dim) { return dim == 1 ? "x,density" : "x,y,density"; }

double left_mass(const DensityFn& dens, const QuadratureGrid& grid) {
  return mode_mass(dens, grid.lower, Vector::Zero(1), grid);
}

}  // namespace

ExperimentConfig config_from_json(const json& j, ExperimentKind kind, Profile profile) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  if (j.contains("experiment") && experiment_from_string(j.at("experiment").get<std::string>()) != kind) {
    throw ConfigError("config is for experiment '" + j.at("experiment").get<std::string>() +
                      "' but '" + to_string(kind) + "' was requested");
  }

  ExperimentConfig c;
  c.experiment = kind;
  c.profile = profile;
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.output_dir = get_or<std::string>(j, "output_dir", "out");
  c.mu = get_or(j, "mu", 5.0);
  c.sigma = get_or(j, "sigma", 1.0);
  c.alpha_p = get_or(j, "alpha_p", 0.2);
  c.alpha_q = get_or(j, "alpha_q", 0.8);
  if (!(c.sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(c.alpha_p > 0.0 && c.alpha_p < 1.0)) throw ConfigError("alpha_p must lie in (0,1)");

  json r = {{"experiment", to_string(kind)},
            {"profile", profile == Profile::desk ? "desk" : "paper"},
            {"seed", c.seed},
            {"output_dir", c.output_dir.string()}};

  if (kind == ExperimentKind::blindness_demo || kind == ExperimentKind::mfd_demo) {
    const bool mfd = kind == ExperimentKind::mfd_demo;
    c.alpha_start = get_or(j, "alpha_start", mfd ? 0.0 : 0.01);
    c.alpha_stop = get_or(j, "alpha_stop", mfd ? 1.0 : 0.99);
    c.alpha_step = get_or(j, "alpha_step", 0.01);
    if (j.contains("target") && j.at("target") != "toy_1d") {
      throw ConfigError("demos use the toy_1d target family (configure mu, sigma, alpha_p)");
    }
    c.grid = grid_from_json(j, 1);
    r.update({{"target", "toy_1d"}, {"mu", c.mu}, {"sigma", c.sigma}, {"alpha_p", c.alpha_p},
              {"alpha_q", c.alpha_q}, {"alpha_start", c.alpha_start}, {"alpha_stop", c.alpha_stop},
              {"alpha_step", c.alpha_step}, {"grid", grid_json(c.grid)}});
    if (mfd) {
      c.demo_beta = get_or(j, "mixing_beta", 0.5);
      c.mixing = j.contains("mixing") ? density_from_json(j.at("mixing")) : normal_1d(0.0, 3.0);
      if (c.mixing->dim() != 1) throw ConfigError("mixing density must be 1D");
      r.update({{"mixing", to_json(*c.mixing)}, {"mixing_beta", c.demo_beta}});
    }
    c.resolved = r;
    return c;
  }

  const bool anneal = kind == ExperimentKind::anneal_demo;
  const json target_spec = j.contains("target") ? j.at("target") : json(anneal ? "toy_1d" : "");
  if (!anneal && !j.contains("target")) throw ConfigError("train requires a 'target'");
  c.target = named_target(target_spec, c.target_name, c.mu, c.sigma, c.alpha_p);
  const int dim = c.target->dim();
  if (anneal && dim != 1) throw ConfigError("anneal-demo needs a 1D target");

  const bool paper = profile == Profile::paper;
  TrainConfig& t = c.train;
  t.method = anneal ? TrainMethod::fd_annealed
                    : train_method_from_string(get_or<std::string>(j, "method", "mfd"));
  if (anneal && j.contains("method") && j.at("method") != "fd_annealed") {
    throw ConfigError("anneal-demo trains fd_annealed; use 'compare' for other methods");
  }
  t.beta = get_or(j, "beta", 0.8);
  // With decay 0.9999 the noise std reaches 3.0 * 0.9999^90000 ~ 3.7e-4 only after 90k steps.
  t.iterations = get_or<std::size_t>(j, "iterations", anneal ? 90000 : (paper ? 30000 : 10000));
  t.batch_size = get_or<std::size_t>(j, "batch_size", 300);
  t.learning_rate = get_or(j, "learning_rate", 3e-4);
  t.anneal_start_std = get_or(j, "anneal_start_std", 3.0);
  t.anneal_decay = get_or(j, "anneal_decay", 0.9999);
  t.seed = derive_seed(c.seed, 3);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }

  const int width = paper ? 200 : 64;
  c.hidden = get_or(j, "hidden", anneal ? std::vector<int>{30} : std::vector<int>{width, width, width});
  if (c.hidden.empty() || std::any_of(c.hidden.begin(), c.hidden.end(), [](int w) { return w < 1; })) {
    throw ConfigError("hidden must list positive layer widths");
  }
  try {
    c.activation = activation_from_string(get_or<std::string>(j, "activation", anneal ? "tanh" : "swish"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.data_size = get_or<std::size_t>(j, "data_size", anneal ? 10000 : 100000);
  c.kl_samples = get_or<std::size_t>(j, "kl_samples", 10000);
  c.export_points = get_or<std::size_t>(j, "export_points", dim == 1 ? 401 : 201);
  c.snapshot_every = get_or<std::size_t>(j, "snapshot_every", 1000);
  if (c.data_size < 2 || c.kl_samples < 1 || c.snapshot_every < 1) {
    throw ConfigError("data_size, kl_samples and snapshot_every must be positive");
  }
  if (c.export_points < 3 || c.export_points % 2 == 0) throw ConfigError("export_points must be odd and >= 3");
  for (const auto& name : get_or(j, "compare", anneal ? std::vector<std::string>{"mfd"} : std::vector<std::string>{})) {
    try {
      c.compare.push_back(train_method_from_string(name));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  c.grid = grid_from_json(j, dim);

  std::vector<std::string> compare_names;
  for (auto m : c.compare) compare_names.emplace_back(to_string(m));
  r.update({{"target", target_spec.is_object() ? target_spec : json(c.target_name)},
            {"method", to_string(t.method)},
            {"beta", t.beta},
            {"iterations", t.iterations},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"hidden", c.hidden},
            {"activation", to_string(c.activation)},
            {"data_size", c.data_size},
            {"kl_samples", c.kl_samples},
            {"export_points", c.export_points},
            {"grid", grid_json(c.grid)}});
  if (c.target_name == "toy_1d") r.update({{"mu", c.mu}, {"sigma", c.sigma}, {"alpha_p", c.alpha_p}});
  if (anneal || t.method == TrainMethod::fd_annealed) {
    r.update({{"anneal_start_std", t.anneal_start_std}, {"anneal_decay", t.anneal_decay}});
  }
  if (anneal) r.update({{"snapshot_every", c.snapshot_every}, {"compare", compare_names}});
  c.resolved = r;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentKind kind, Profile profile) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j, kind, profile);
}

ExperimentResult run_blindness_demo(const ExperimentConfig& c) {
  ArtifactWriter out(c.output_dir);
  const AnalyticDensity g1 = normal_1d(-c.mu, c.sigma), g2 = normal_1d(c.mu, c.sigma);
  const AnalyticDensity p = two_component(g1, g2, c.alpha_p);
  const AnalyticDensity q = two_component(g1, g2, c.alpha_q);

  Rows dens, scores;
  Vector x(1);
  for (int i = 0; i < c.grid.points_per_axis; ++i) {
    x(0) = c.grid.node(0, i);
    dens.push_back({x(0), p.density(x), q.density(x)});
    scores.push_back({x(0), p.score(x)(0), q.score(x)(0)});
  }
  out.write("densities.csv", csv("x,p,q", dens));
  out.write("scores.csv", csv("x,score_p,score_q", scores));

  const auto alphas = alphas_of(c);
  const auto curve = divergence_curve(c.alpha_p, alphas, fd_curve_config(g1, g2, c.grid));
  out.write("fd_curve.csv", curve_csv(curve, Estimator::fd_quadrature));

  double lo = curve.front().value, hi = lo;
  for (const auto& pt : curve) {
    lo = std::min(lo, pt.value);
    hi = std::max(hi, pt.value);
  }
  json metrics = {{"fd_pq", fd_quadrature(p, q, c.grid).value},
                  {"fd_curve_min", lo},
                  {"fd_curve_max", hi},
                  {"fd_curve_range", hi - lo},
                  {"flat", hi - lo < 1e-3},
                  {"alphas", alphas}};
  std::vector<std::string> failed;
  if (!all_valid(curve)) failed.emplace_back("finite_nonnegative_fd");
  return finish(c, out, metrics, failed);
}

ExperimentResult run_mfd_demo(const ExperimentConfig& c) {
  ArtifactWriter out(c.output_dir);
  const AnalyticDensity g1 = normal_1d(-c.mu, c.sigma), g2 = normal_1d(c.mu, c.sigma);
  const AnalyticDensity p = two_component(g1, g2, c.alpha_p);
  const AnalyticDensity q = two_component(g1, g2, c.alpha_q);
  const AnalyticDensity& m = *c.mixing;
  const AnalyticDensity pa = augment(p, m, c.demo_beta), qa = augment(q, m, c.demo_beta);

  Rows dens, scores;
  Vector x(1);
  for (int i = 0; i < c.grid.points_per_axis; ++i) {
    x(0) = c.grid.node(0, i);
    dens.push_back({x(0), pa.density(x), qa.density(x), m.density(x)});
    scores.push_back({x(0), pa.score(x)(0), qa.score(x)(0)});
  }
  out.write("augmented_densities.csv", csv("x,p_aug,q_aug,m", dens));
  out.write("augmented_scores.csv", csv("x,score_p_aug,score_q_aug", scores));

  const auto alphas = alphas_of(c);
  CurveConfig mcfg{g1, g2, Estimator::mfd, c.grid, m, c.demo_beta};
  const auto mfd_curve = divergence_curve(c.alpha_p, alphas, mcfg);
  const auto fd_curve = divergence_curve(c.alpha_p, alphas, fd_curve_config(g1, g2, c.grid));
  out.write("mfd_curve.csv", curve_csv(mfd_curve, Estimator::mfd));
  out.write("fd_curve.csv", curve_csv(fd_curve, Estimator::fd_quadrature));

  const auto best = std::min_element(mfd_curve.begin(), mfd_curve.end(),
                                     [](const CurvePoint& a, const CurvePoint& b) { return a.value < b.value; });
  json metrics = {{"argmin_alpha", best->alpha},
                  {"min_value", best->value},
                  {"mfd_pq", mfd(p, q, m, c.demo_beta, c.grid).value},
                  {"fd_pq", fd_quadrature(p, q, c.grid).value},
                  {"rows", mfd_curve.size()},
                  {"alphas", alphas}};
  std::vector<std::string> failed;
  if (!all_valid(mfd_curve) || !all_valid(fd_curve)) failed.emplace_back("finite_nonnegative_divergence");
  return finish(c, out, metrics, failed);
}

namespace {

struct Fitted {
  NormalizedModel model;
  std::optional<CorrectedDensity> corrected;
  std::optional<CorrectionDiagnostics> diagnostics;

  DensityFn density() const {
    if (corrected) return [c = *corrected](const Vector& x) { return c(x); };
    return [m = model](const Vector& x) { return m.density(x); };
  }
  DensityFn log_density() const {
    if (corrected) return [c = *corrected](const Vector& x) { return c.log_density(x); };
    return [m = model](const Vector& x) { return m.log_density(x); };
  }
};

Fitted fit_and_normalize(const MlpEnergy& trained, const TrainConfig& t, const AnalyticDensity* m,
                         const QuadratureGrid& grid, std::vector<std::string>& failed,
                         const std::string& label) {
  MethodMetadata meta;
  meta.method = t.method;
  if (t.method == TrainMethod::mfd) {
    meta.beta = t.beta;
    meta.m = *m;
  }
  Fitted f{normalize_model(trained, grid, meta), std::nullopt, std::nullopt};
  if (t.method == TrainMethod::mfd) {
    f.corrected = CorrectedDensity::from_model(f.model);
    f.diagnostics = correction_diagnostics(*f.corrected, grid);
    if (!(std::abs(f.diagnostics->negative_mass) < 0.05)) failed.push_back(label + "corrected_negative_mass");
  }
  return f;
}

}  // namespace

ExperimentResult run_train_2d(const ExperimentConfig& c) {
  ArtifactWriter out(c.output_dir);
  const AnalyticDensity& p = *c.target;
  const int dim = p.dim();
  const PointSet data = sample(p, c.data_size, derive_seed(c.seed, 1));
  std::optional<AnalyticDensity> m;
  if (c.train.method == TrainMethod::mfd) m = AnalyticDensity(moment_match(data));

  std::vector<int> dims{dim};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(1);
  const MlpEnergy init = init_mlp(dims, c.activation, derive_seed(c.seed, 2));

  std::vector<std::string> failed;
  json metrics = {{"method", to_string(c.train.method)}, {"target", c.target_name}};
  TrainResult result;
  try {
    result = train(data, c.train, init, m ? &*m : nullptr);
  } catch (const NumericalError& e) {
    failed.emplace_back("finite_loss");
    metrics["error"] = e.what();
    metrics["diverged_at_iteration"] = e.index();
    return finish(c, out, metrics, failed);
  }
  out.write("trace.csv", trace_csv(result.trace));
  out.write("model.json", checkpoint_json(result.model).dump() + "\n");

  Fitted fit;
  try {
    fit = fit_and_normalize(result.model, c.train, m ? &*m : nullptr, c.grid, failed, "");
  } catch (const std::runtime_error& e) {
    failed.emplace_back("normalization");
    metrics["error"] = e.what();
    return finish(c, out, metrics, failed);
  }

  const auto eg = export_grid(c.grid, c.export_points);
  out.write("truth_density.csv",
            csv(density_header(dim), grid_rows(density_grid_export([&](const Vector& x) { return p.density(x); }, eg))));
  out.write("model_density.csv", csv(density_header(dim), grid_rows(density_grid_export(fit.density(), eg))));
  if (fit.corrected) {
    out.write("augmented_model_density.csv",
              csv(density_header(dim),
                  grid_rows(density_grid_export([&](const Vector& x) { return fit.model.density(x); }, eg))));
  }

  const std::uint64_t kl_seed = derive_seed(c.seed, 4);
  json report = {{"method", to_string(c.train.method)}, {"k", c.kl_samples}, {"seed", kl_seed}};
  try {
    const auto kl = kl_monte_carlo(p, fit.log_density(), c.kl_samples, kl_seed);
    report["kl"] = kl.value;
    report["kl_std_error"] = kl.std_error;
    metrics["kl"] = kl.value;
    metrics["kl_std_error"] = kl.std_error;
  } catch (const NumericalError& e) {
    failed.emplace_back("finite_kl");
    report["kl"] = nullptr;
    metrics["error"] = e.what();
  }
  report["negative_mass"] = fit.diagnostics ? json(fit.diagnostics->negative_mass) : json(nullptr);
  if (fit.diagnostics) {
    report["clamped_fraction"] = fit.diagnostics->clamped_fraction;
    metrics["negative_mass"] = fit.diagnostics->negative_mass;
  }
  out.write("kl_report.json", report.dump(2) + "\n");

  metrics["log_z"] = fit.model.log_z;
  metrics["final_loss"] = result.trace.empty() ? json(nullptr) : json(result.trace.back().loss);
  return finish(c, out, metrics, failed);
}

ExperimentResult run_anneal_demo(const ExperimentConfig& c) {
  ArtifactWriter out(c.output_dir);
  const AnalyticDensity& p = *c.target;
  const PointSet data = sample(p, c.data_size, derive_seed(c.seed, 1));
  std::vector<int> dims{1};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(1);
  const MlpEnergy net = init_mlp(dims, c.activation, derive_seed(c.seed, 2));

  const double truth = left_mass([&](const Vector& x) { return p.density(x); }, c.grid);
  std::vector<std::string> failed;
  Rows snapshots, snapshot_density;
  auto observer = [&](std::size_t done, const MlpEnergy& model, double used_std) {
    if (done % c.snapshot_every != 0) return;
    NormalizedModel nm;
    try {
      nm = normalize_model(model, c.grid);
    } catch (const std::runtime_error&) {
      failed.push_back("normalization_at_" + std::to_string(done));
      return;
    }
    const DensityFn dens = [&nm](const Vector& x) { return nm.density(x); };
    snapshots.push_back({static_cast<double>(done), used_std, left_mass(dens, c.grid)});
    for (const auto& r : density_grid_export(dens, c.grid)) {
      snapshot_density.push_back({static_cast<double>(done), r.x, r.value});
    }
  };

  json metrics = {{"true_left_mass", truth}};
  TrainResult result;
  try {
    result = train(data, c.train, net, nullptr, observer);
  } catch (const NumericalError& e) {
    failed.emplace_back("finite_loss");
    metrics["error"] = e.what();
    return finish(c, out, metrics, failed);
  }
  out.write("trace.csv", trace_csv(result.trace));
  out.write("snapshots.csv", csv("iteration,noise_std,left_mass", snapshots));
  out.write("snapshot_densities.csv", csv("iteration,x,density", snapshot_density));

  metrics["snapshot_count"] = snapshots.size();
  if (!snapshots.empty()) {
    metrics["first_left_mass"] = snapshots.front()[2];
    metrics["first_noise_std"] = snapshots.front()[1];
    metrics["final_left_mass"] = snapshots.back()[2];
    metrics["final_noise_std"] = snapshots.back()[1];
    metrics["final_deviation"] = std::abs(snapshots.back()[2] - truth);
  }

  json compare = json::object();
  for (TrainMethod method : c.compare) {
    TrainConfig t = c.train;
    t.method = method;
    std::optional<AnalyticDensity> m;
    if (method == TrainMethod::mfd) m = AnalyticDensity(moment_match(data));
    const std::string label = std::string(to_string(method)) + "_";
    try {
      const auto r = train(data, t, net, m ? &*m : nullptr);
      const Fitted fit = fit_and_normalize(r.model, t, m ? &*m : nullptr, c.grid, failed, label);
      Rows rows;
      for (const auto& g : density_grid_export(fit.density(), c.grid)) rows.push_back({g.x, g.value});
      out.write("compare_" + std::string(to_string(method)) + "_density.csv", csv("x,density", rows));
      json entry = {{"left_mass", left_mass(fit.density(), c.grid)}};
      if (fit.diagnostics) entry["negative_mass"] = fit.diagnostics->negative_mass;
      compare[to_string(method)] = entry;
    } catch (const NumericalError&) {
      failed.push_back(label + "finite_loss");
    } catch (const std::runtime_error&) {
      failed.push_back(label + "normalization");
    }
  }
  metrics["compare"] = compare;
  return finish(c, out, metrics, failed);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.experiment) {
    case ExperimentKind::blindness_demo: return run_blindness_demo(config);
    case ExperimentKind::mfd_demo: return run_mfd_demo(config);
    case ExperimentKind::train_2d: return run_train_2d(config);
    case ExperimentKind::anneal_demo: return run_anneal_demo(config);
  }
  throw std::logic_error("run_experiment: unhandled experiment");
}

}  // namespace mixfd
