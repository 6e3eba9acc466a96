#include "mixfd/ebm.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace mixfd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// structure

std::size_t MlpEnergy::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    n += static_cast<std::size_t>(layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1]);
  }
  return n;
}

void MlpEnergy::validate() const {
  if (layer_dims.size() < 2) throw std::invalid_argument("MlpEnergy: need at least two layer dims");
  if (layer_dims.back() != 1) throw std::invalid_argument("MlpEnergy: output dimension must be 1");
  for (int w : layer_dims) {
    if (w < 1) throw std::invalid_argument("MlpEnergy: layer widths must be positive");
  }
  if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
    throw std::invalid_argument("MlpEnergy: layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
        biases[l].size() != layer_dims[l + 1]) {
      throw std::invalid_argument("MlpEnergy: parameter shape mismatch in layer " +
                                  std::to_string(l));
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw std::invalid_argument("MlpEnergy: non-finite parameter in layer " + std::to_string(l));
    }
  }
}

MlpEnergy zero_mlp(std::vector<int> layer_dims, Activation activation) {
  MlpEnergy f;
  f.layer_dims = std::move(layer_dims);
  f.activation = activation;
  for (std::size_t l = 0; l + 1 < f.layer_dims.size(); ++l) {
    f.weights.push_back(MatrixXd::Zero(f.layer_dims[l + 1], f.layer_dims[l]));
    f.biases.push_back(VectorXd::Zero(f.layer_dims[l + 1]));
  }
  f.validate();
  return f;
}

MlpEnergy init_mlp(std::vector<int> layer_dims, Activation activation, std::uint64_t seed) {
  MlpEnergy f = zero_mlp(std::move(layer_dims), activation);
  std::mt19937_64 rng(seed);
  for (auto& w : f.weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> unif(-limit, limit);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = unif(rng);
    }
  }
  return f;
}

ParameterVector flatten(const MlpEnergy& f) {
  ParameterVector theta(static_cast<Eigen::Index>(f.parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < f.weights.size(); ++l) {
    const auto& w = f.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) theta(k++) = w(i, j);
    }
    theta.segment(k, f.biases[l].size()) = f.biases[l];
    k += f.biases[l].size();
  }
  return theta;
}

void unflatten(MlpEnergy& f, const ParameterVector& theta) {
  if (theta.size() != static_cast<Eigen::Index>(f.parameter_count())) {
    throw std::invalid_argument("unflatten: parameter vector has the wrong length");
  }
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < f.weights.size(); ++l) {
    auto& w = f.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = theta(k++);
    }
    f.biases[l] = theta.segment(k, f.biases[l].size());
    k += f.biases[l].size();
  }
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::swish: return "swish";
    case Activation::tanh: return "tanh";
    case Activation::square: return "square";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "swish") return Activation::swish;
  if (name == "tanh") return Activation::tanh;
  if (name == "square") return Activation::square;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

// ---------------------------------------------------------------------------
// pointwise evaluation

namespace {

void check_input(const MlpEnergy& f, Eigen::Index d) {
  if (d != f.input_dim()) {
    throw std::invalid_argument("MlpEnergy: input has dimension " + std::to_string(d) +
                                ", network expects " + std::to_string(f.input_dim()));
  }
}

// Input gradient by a reverse sweep, generic in the scalar so that running it
// on Dual inputs differentiates the sweep itself (forward-over-reverse).
template <class S>
std::vector<S> reverse_input_gradient(const MlpEnergy& f, const std::vector<S>& x) {
  const std::size_t hidden = f.layer_count() - 1;
  std::vector<std::vector<S>> pre(hidden);
  std::vector<S> a = x;
  for (std::size_t l = 0; l < hidden; ++l) {
    const auto& w = f.weights[l];
    std::vector<S> z(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      S acc = f.biases[l](i);
      for (Eigen::Index j = 0; j < w.cols(); ++j) acc += S(w(i, j)) * a[static_cast<std::size_t>(j)];
      z[static_cast<std::size_t>(i)] = acc;
    }
    a.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = activate(f.activation, z[i]);
    pre[l] = std::move(z);
  }

  const auto& out = f.weights.back();
  std::vector<S> delta(static_cast<std::size_t>(out.cols()));
  for (Eigen::Index j = 0; j < out.cols(); ++j) delta[static_cast<std::size_t>(j)] = out(0, j);

  for (std::size_t l = hidden; l-- > 0;) {
    const auto& w = f.weights[l];
    std::vector<S> zeta(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      zeta[i] = delta[i] * activate_slope(f.activation, pre[l][i]);
    }
    std::vector<S> prev(static_cast<std::size_t>(w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      S acc = 0.0;
      for (Eigen::Index i = 0; i < w.rows(); ++i) acc += S(w(i, j)) * zeta[static_cast<std::size_t>(i)];
      prev[static_cast<std::size_t>(j)] = acc;
    }
    delta = std::move(prev);
  }
  return delta;
}

}  // namespace

double energy(const MlpEnergy& f, const VectorXd& x) {
  check_input(f, x.size());
  VectorXd a = x;
  const std::size_t hidden = f.layer_count() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    VectorXd z = f.weights[l] * a + f.biases[l];
    a = z.unaryExpr([&](double u) { return activate(f.activation, u); });
  }
  return (f.weights.back() * a)(0) + f.biases.back()(0);
}

VectorXd energy_batch(const MlpEnergy& f, const MatrixXd& points) {
  check_input(f, points.rows());
  MatrixXd a = points;
  const std::size_t hidden = f.layer_count() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    MatrixXd z = f.weights[l] * a;
    z.colwise() += f.biases[l];
    a = z.unaryExpr([&](double u) { return activate(f.activation, u); });
  }
  VectorXd e = (f.weights.back() * a).transpose();
  e.array() += f.biases.back()(0);
  return e;
}

VectorXd energy_grad_x(const MlpEnergy& f, const VectorXd& x) {
  check_input(f, x.size());
  const std::vector<double> xs(x.data(), x.data() + x.size());
  const auto g = reverse_input_gradient(f, xs);
  return Eigen::Map<const VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

double energy_hessian_trace(const MlpEnergy& f, const VectorXd& x) {
  check_input(f, x.size());
  const auto d = static_cast<std::size_t>(x.size());
  double trace = 0.0;
  std::vector<Dual> xs(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) xs[j] = Dual(x(static_cast<Eigen::Index>(j)), i == j ? 1.0 : 0.0);
    trace += reverse_input_gradient(f, xs)[i].d;
  }
  return trace;
}

// ---------------------------------------------------------------------------
// batched score-matching loss
//
// For each coordinate direction e_i the forward sweep carries the value, the
// first directional derivative and the second directional derivative of every
// activation (a second-order Taylor jet). Channels are laid out side by side
// so each layer is a single matrix product:
//
//   [ value | d/dx_1 ... d/dx_d | d2/dx_1^2 ... d2/dx_d^2 ]   (B columns each)
//
// The output layer then yields grad_i f and the Hessian diagonal H_ii, and the
// reverse sweep below is the exact adjoint of this Taylor recurrence.

namespace {

struct LayerTape {
  MatrixXd in;   // layer input channels, width x (C*B)
  MatrixXd pre;  // pre-activation channels
  MatrixXd s1, s2, s3;  // activation derivatives at the value channel
};

struct BatchForward {
  std::vector<LayerTape> tape;  // hidden layers
  MatrixXd out_in;              // input channels of the output layer
  MatrixXd grad;                // d x B
  MatrixXd hess_diag;           // d x B
};

BatchForward forward_batch(const MlpEnergy& f, const MatrixXd& x) {
  const Eigen::Index d = x.rows();
  const Eigen::Index b = x.cols();
  const Eigen::Index channels = 1 + 2 * d;

  MatrixXd in = MatrixXd::Zero(d, channels * b);
  in.leftCols(b) = x;
  for (Eigen::Index i = 0; i < d; ++i) in.block(i, (1 + i) * b, 1, b).setOnes();

  BatchForward fw;
  const std::size_t hidden = f.layer_count() - 1;
  fw.tape.resize(hidden);
  for (std::size_t l = 0; l < hidden; ++l) {
    LayerTape& t = fw.tape[l];
    t.in = std::move(in);
    t.pre = f.weights[l] * t.in;
    t.pre.leftCols(b).colwise() += f.biases[l];

    const Eigen::Index width = t.pre.rows();
    t.s1.resize(width, b);
    t.s2.resize(width, b);
    t.s3.resize(width, b);
    in.resize(width, channels * b);
    for (Eigen::Index c = 0; c < b; ++c) {
      for (Eigen::Index r = 0; r < width; ++r) {
        const Jet j = activation_jet(f.activation, t.pre(r, c));
        in(r, c) = j.f;
        t.s1(r, c) = j.d1;
        t.s2(r, c) = j.d2;
        t.s3(r, c) = j.d3;
      }
    }
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto dz = t.pre.middleCols((1 + i) * b, b);
      const auto ddz = t.pre.middleCols((1 + d + i) * b, b);
      in.middleCols((1 + i) * b, b) = t.s1.cwiseProduct(dz);
      in.middleCols((1 + d + i) * b, b) =
          t.s2.cwiseProduct(dz.cwiseProduct(dz)) + t.s1.cwiseProduct(ddz);
    }
  }
  fw.out_in = std::move(in);

  const auto w_out = f.weights.back().row(0);
  fw.grad.resize(d, b);
  fw.hess_diag.resize(d, b);
  for (Eigen::Index i = 0; i < d; ++i) {
    fw.grad.row(i) = w_out * fw.out_in.middleCols((1 + i) * b, b);
    fw.hess_diag.row(i) = w_out * fw.out_in.middleCols((1 + d + i) * b, b);
  }
  return fw;
}

Eigen::RowVectorXd per_sample_loss(const BatchForward& fw) {
  Eigen::RowVectorXd loss =
      0.5 * fw.grad.colwise().squaredNorm() - fw.hess_diag.colwise().sum();
  for (Eigen::Index c = 0; c < loss.size(); ++c) {
    if (!std::isfinite(loss(c))) {
      throw NumericalError("sm_loss: non-finite loss at sample " + std::to_string(c),
                           static_cast<std::size_t>(c));
    }
  }
  return loss;
}

void check_batch(const MlpEnergy& f, const MatrixXd& batch) {
  check_input(f, batch.rows());
  if (batch.cols() < 1) throw std::invalid_argument("sm_loss: empty batch");
}

}  // namespace

double sm_loss(const MlpEnergy& f, const MatrixXd& batch) {
  check_batch(f, batch);
  return per_sample_loss(forward_batch(f, batch)).mean();
}

LossAndGrad sm_loss_and_grad(const MlpEnergy& f, const MatrixXd& batch) {
  check_batch(f, batch);
  const Eigen::Index d = batch.rows();
  const Eigen::Index b = batch.cols();
  const Eigen::Index channels = 1 + 2 * d;
  const double inv_b = 1.0 / static_cast<double>(b);

  const BatchForward fw = forward_batch(f, batch);
  LossAndGrad out;
  out.loss = per_sample_loss(fw).mean();

  std::vector<MatrixXd> grad_w(f.layer_count());
  std::vector<VectorXd> grad_b(f.layer_count());

  // Output layer: loss depends on it only through grad_i = w . dA_i and H_ii = w . ddA_i.
  Eigen::RowVectorXd out_bar = Eigen::RowVectorXd::Zero(channels * b);
  for (Eigen::Index i = 0; i < d; ++i) {
    out_bar.segment((1 + i) * b, b) = fw.grad.row(i) * inv_b;
    out_bar.segment((1 + d + i) * b, b).setConstant(-inv_b);
  }
  grad_w.back() = out_bar * fw.out_in.transpose();
  grad_b.back() = VectorXd::Zero(1);
  MatrixXd in_bar = f.weights.back().transpose() * out_bar;

  for (std::size_t l = fw.tape.size(); l-- > 0;) {
    const LayerTape& t = fw.tape[l];
    MatrixXd pre_bar(t.pre.rows(), channels * b);

    auto z_bar = pre_bar.leftCols(b);
    z_bar = in_bar.leftCols(b).cwiseProduct(t.s1);
    for (Eigen::Index i = 0; i < d; ++i) {
      const auto dz = t.pre.middleCols((1 + i) * b, b);
      const auto ddz = t.pre.middleCols((1 + d + i) * b, b);
      const auto da_bar = in_bar.middleCols((1 + i) * b, b);
      const auto dda_bar = in_bar.middleCols((1 + d + i) * b, b);

      z_bar += da_bar.cwiseProduct(t.s2).cwiseProduct(dz) +
               dda_bar.cwiseProduct(t.s3.cwiseProduct(dz.cwiseProduct(dz)) +
                                    t.s2.cwiseProduct(ddz));
      pre_bar.middleCols((1 + i) * b, b) =
          da_bar.cwiseProduct(t.s1) + 2.0 * dda_bar.cwiseProduct(t.s2).cwiseProduct(dz);
      pre_bar.middleCols((1 + d + i) * b, b) = dda_bar.cwiseProduct(t.s1);
    }

    grad_w[l] = pre_bar * t.in.transpose();
    grad_b[l] = pre_bar.leftCols(b).rowwise().sum();
    if (l > 0) in_bar = f.weights[l].transpose() * pre_bar;
  }

  out.grad.resize(static_cast<Eigen::Index>(f.parameter_count()));
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < f.layer_count(); ++l) {
    const auto& gw = grad_w[l];
    for (Eigen::Index i = 0; i < gw.rows(); ++i) {
      for (Eigen::Index j = 0; j < gw.cols(); ++j) out.grad(k++) = gw(i, j);
    }
    out.grad.segment(k, grad_b[l].size()) = grad_b[l];
    k += grad_b[l].size();
  }
  return out;
}

ParameterVector sm_loss_grad_params(const MlpEnergy& f, const MatrixXd& batch) {
  return sm_loss_and_grad(f, batch).grad;
}

// ---------------------------------------------------------------------------
// checkpoints

nlohmann::json checkpoint_json(const MlpEnergy& f) {
  const ParameterVector theta = flatten(f);
  return {{"format_version", kCheckpointVersion},
          {"layer_dims", f.layer_dims},
          {"activation", to_string(f.activation)},
          {"parameters", std::vector<double>(theta.data(), theta.data() + theta.size())}};
}

MlpEnergy mlp_from_checkpoint(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::invalid_argument("checkpoint: unsupported format_version " + std::to_string(version));
  }
  MlpEnergy f = zero_mlp(j.at("layer_dims").get<std::vector<int>>(),
                         activation_from_string(j.at("activation").get<std::string>()));
  const auto params = j.at("parameters").get<std::vector<double>>();
  unflatten(f, Eigen::Map<const VectorXd>(params.data(), static_cast<Eigen::Index>(params.size())));
  f.validate();
  return f;
}

void save_checkpoint(const std::filesystem::path& path, const MlpEnergy& f) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os << checkpoint_json(f).dump(1) << '\n';
}

MlpEnergy load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path.string());
  return mlp_from_checkpoint(nlohmann::json::parse(is));
}

}  // namespace mixfd
