#include "hesplit/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "hesplit/util/errors.hpp"
#include "hesplit/util/rng.hpp"

namespace hesplit {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "approx_sigmoid" || s == "approx-sigmoid") return Activation::approx_sigmoid;
    if (s == "identity") return Activation::identity;
    throw ParamError("unknown activation: " + s);
}

double PolyApprox::operator()(double x) const {
    const double y = (2 * x - (hi + lo)) / (hi - lo);
    double acc = 0;
    for (auto it = coefficients.rbegin(); it != coefficients.rend(); ++it) acc = acc * y + *it;
    return acc;
}

PolyApprox PolyApprox::derivative() const {
    PolyApprox d = *this;
    d.coefficients.clear();
    const double alpha = 2.0 / (hi - lo);  // dy/dx
    for (std::size_t j = 1; j < coefficients.size(); ++j) {
        d.coefficients.push_back(coefficients[j] * static_cast<double>(j) * alpha);
    }
    if (d.coefficients.empty()) d.coefficients.push_back(0.0);
    d.levels_consumed = std::max(1, static_cast<int>(std::ceil(std::log2(d.degree() + 2))));
    d.max_error = 0.0;  // not re-measured; derivative of the fit, by definition
    return d;
}

PolyApprox chebyshev_fit(const std::function<double(double)>& target, int degree, double lo,
                         double hi, int error_grid) {
    if (degree < 0) throw ParamError("chebyshev_fit: degree must be >= 0");
    if (!(lo < hi)) throw ParamError("chebyshev_fit: degenerate interval");
    const int m = degree + 1;
    const double mid = 0.5 * (hi + lo), half = 0.5 * (hi - lo);

    // Chebyshev coefficients from the interpolation nodes.
    std::vector<double> fx(m);
    for (int k = 0; k < m; ++k) {
        const double theta = M_PI * (k + 0.5) / m;
        fx[k] = target(mid + half * std::cos(theta));
    }
    std::vector<double> cheb(m, 0.0);
    for (int j = 0; j < m; ++j) {
        double s = 0;
        for (int k = 0; k < m; ++k) s += fx[k] * std::cos(j * M_PI * (k + 0.5) / m);
        cheb[j] = (j == 0 ? 1.0 : 2.0) * s / m;
    }

    // Convert T_j(y) to monomials in y via the recurrence T_{j+1} = 2yT_j - T_{j-1}.
    std::vector<std::vector<double>> T = {{1.0}, {0.0, 1.0}};
    for (int j = 2; j < m; ++j) {
        std::vector<double> t(j + 1, 0.0);
        for (std::size_t k = 0; k < T[j - 1].size(); ++k) t[k + 1] += 2.0 * T[j - 1][k];
        for (std::size_t k = 0; k < T[j - 2].size(); ++k) t[k] -= T[j - 2][k];
        T.push_back(std::move(t));
    }
    PolyApprox p;
    p.lo = lo;
    p.hi = hi;
    p.coefficients.assign(m, 0.0);
    for (int j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < T[j].size(); ++k) p.coefficients[k] += cheb[j] * T[j][k];
    }
    p.levels_consumed = std::max(1, static_cast<int>(std::ceil(std::log2(degree + 1.0))));
    if ((1 << p.levels_consumed) < degree + 1) ++p.levels_consumed;

    double worst = 0;
    for (int g = 0; g < error_grid; ++g) {
        const double x = lo + (hi - lo) * g / (error_grid - 1.0);
        worst = std::max(worst, std::abs(p(x) - target(x)));
    }
    p.max_error = worst;
    return p;
}

PolyApprox chebyshev_fit_sigmoid(int degree, double lo, double hi) {
    return chebyshev_fit([](double x) { return sigmoid(x); }, degree, lo, hi);
}

namespace {

int floor_pow2(int v) {
    int p = 1;
    while (2 * p <= v) p <<= 1;
    return p;
}

int depth_for_degree(int d) {
    return std::max(1, static_cast<int>(std::ceil(std::log2(d + 1.0))));
}

// Recursive power-of-two split evaluation over the normalized variable
// u = 2^e * x with |u| <= 1 on the interval. High halves are built at their
// natural scales (which stay large, keeping fixed-magnitude key-switch noise
// small relative to the carried values); only additive partners are steered,
// and their targets are always at least the nominal scale. This keeps the
// consumed depth at exactly ceil(log2(d+1)).
CipherValue eval_steered(std::span<const double> coeffs, const CipherValue& base,
                         const std::map<int, CipherValue>& powers, const Backend& backend,
                         int target_level, double target_scale) {
    const int d = static_cast<int>(coeffs.size()) - 1;
    if (d <= 1) {
        const double c1 = d == 1 ? coeffs[1] : 0.0;
        const double q = backend.rescale_divisor(base.level());
        const double t = target_scale * q / base.scale();
        CipherValue r = backend.mul_scalar_at(base, c1, t);
        if (coeffs[0] != 0.0) {
            r = backend.add_plain(
                r, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(backend.slot_count()),
                                             coeffs[0]));
        }
        return backend.level_drop(r, target_level);
    }
    const int m = floor_pow2(d);
    const CipherValue& pm = powers.at(m);
    CipherValue mul_term = [&] {
        if (d - m == 0) {
            const double q = backend.rescale_divisor(pm.level());
            const double t = target_scale * q / pm.scale();
            return backend.mul_scalar_at(pm, coeffs[m], t);
        }
        const int hi_natural = base.level() - depth_for_degree(d - m);
        const int op_level = std::min(pm.level(), hi_natural);
        const double q = backend.rescale_divisor(op_level);
        const CipherValue pm_d = pm.level() == op_level ? pm : backend.level_drop(pm, op_level);
        const double hi_target_scale = target_scale * q / pm_d.scale();
        const CipherValue hi = eval_steered(coeffs.subspan(m), base, powers, backend, op_level,
                                            hi_target_scale);
        return backend.mul_ct(pm_d, hi);
    }();
    if (mul_term.level() > target_level) mul_term = backend.level_drop(mul_term, target_level);
    const CipherValue lo =
        eval_steered(coeffs.first(m), base, powers, backend, target_level, mul_term.scale());
    return backend.add(lo, mul_term);
}

// Natural scale the top combine will land on, so the whole tree can be
// steered onto achievable, always-large scales.
double natural_top_scale(int d, const CipherValue& base,
                         const std::map<int, CipherValue>& powers, const Backend& backend) {
    if (d <= 1) return backend.params().scale();
    const int m = floor_pow2(d);
    const CipherValue& pm = powers.at(m);
    if (d - m == 0) {
        return backend.params().scale();  // steered scalar term
    }
    const int hi_natural = base.level() - depth_for_degree(d - m);
    const int op_level = std::min(pm.level(), hi_natural);
    const double q = backend.rescale_divisor(op_level);
    const double hi_scale = backend.params().scale();  // high halves target nominal
    return pm.scale() * hi_scale / q;
}

}  // namespace

CipherValue eval_poly_encrypted(const CipherValue& ct, const PolyApprox& p,
                                const Backend& backend) {
    const int d = p.degree();
    const int need = p.levels_consumed;
    if (ct.level() < need) {
        throw LevelError("eval_poly_encrypted: level budget below ceil(log2(d+1))");
    }
    // Normalize to u = 2^e * x with |u| <= 1 over [lo, hi]; the power-of-two
    // factor is a free scale re-tag that keeps serialized scales exact.
    const int e = static_cast<int>(std::floor(std::log2(2.0 / (p.hi - p.lo))));
    const double alpha2 = std::ldexp(1.0, e);
    // y = A*u + B maps the normalized variable back onto the Chebyshev basis.
    const double A = 2.0 / (alpha2 * (p.hi - p.lo));
    const double B = -(p.hi + p.lo) / (p.hi - p.lo);
    std::vector<double> coeffs(p.coefficients.size(), 0.0);
    {
        std::vector<double> pow_term = {1.0};  // (A*u + B)^j in u
        for (std::size_t j = 0; j < p.coefficients.size(); ++j) {
            for (std::size_t k = 0; k < pow_term.size(); ++k) {
                coeffs[k] += p.coefficients[j] * pow_term[k];
            }
            std::vector<double> next(pow_term.size() + 1, 0.0);
            for (std::size_t k = 0; k < pow_term.size(); ++k) {
                next[k] += pow_term[k] * B;
                next[k + 1] += pow_term[k] * A;
            }
            pow_term = std::move(next);
        }
    }
    const CipherValue base = backend.retag_scale(ct, alpha2);
    std::map<int, CipherValue> powers;
    if (d >= 1) powers.emplace(1, base);
    for (int m = 2; m <= d; m <<= 1) {
        const CipherValue& prev = powers.at(m / 2);
        powers.emplace(m, backend.mul_ct(prev, prev));
    }
    const int target_level = ct.level() - need;
    const double top = natural_top_scale(d, base, powers, backend);
    return eval_steered(coeffs, base, powers, backend, target_level, top);
}

LayerSpec make_layer(int in, int out, Activation act, int degree, double lo, double hi) {
    LayerSpec l;
    l.in_size = in;
    l.out_size = out;
    l.activation = act;
    l.degree = degree;
    l.lo = lo;
    l.hi = hi;
    return l;
}

ModelState init_model(const std::vector<LayerSpec>& layers, double learning_rate, Loss loss,
                      uint64_t seed) {
    ModelState m;
    m.layers = layers;
    m.learning_rate = learning_rate;
    m.loss = loss;
    m.approx.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& spec = layers[l];
        if (spec.in_size < 1 || spec.out_size < 1) throw DimensionError("init_model: bad sizes");
        if (l > 0 && layers[l - 1].out_size != spec.in_size) {
            throw DimensionError("init_model: adjacent layer shapes incompatible");
        }
        Rng rng(derive_seed(seed, l));
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.in_size));
        Eigen::MatrixXd W(spec.out_size, spec.in_size);
        for (int i = 0; i < W.rows(); ++i) {
            for (int j = 0; j < W.cols(); ++j) W(i, j) = rng.uniform(-bound, bound);
        }
        m.weights.push_back(std::move(W));
        m.biases.push_back(Eigen::VectorXd::Zero(spec.out_size));
        if (spec.activation == Activation::approx_sigmoid) {
            m.approx[l] = chebyshev_fit_sigmoid(spec.degree, spec.lo, spec.hi);
        }
    }
    return m;
}

Eigen::MatrixXd activation_value(const ModelState& model, int layer, const Eigen::MatrixXd& z) {
    switch (model.layers[layer].activation) {
        case Activation::identity:
            return z;
        case Activation::sigmoid:
            return z.unaryExpr([](double v) { return sigmoid(v); });
        case Activation::approx_sigmoid: {
            const auto& p = model.approx[layer];
            return z.unaryExpr([&](double v) { return p(v); });
        }
    }
    throw ParamError("activation_value: unreachable");
}

Eigen::MatrixXd activation_derivative(const ModelState& model, int layer,
                                      const Eigen::MatrixXd& z) {
    switch (model.layers[layer].activation) {
        case Activation::identity:
            return Eigen::MatrixXd::Ones(z.rows(), z.cols());
        case Activation::sigmoid:
            return z.unaryExpr([](double v) {
                const double s = sigmoid(v);
                return s * (1 - s);
            });
        case Activation::approx_sigmoid: {
            const auto d = model.approx[layer].derivative();
            return z.unaryExpr([&](double v) { return d(v); });
        }
    }
    throw ParamError("activation_derivative: unreachable");
}

ForwardTrace forward(const ModelState& model, const Eigen::MatrixXd& input, int first_layer,
                     int last_layer) {
    if (input.cols() != model.layers[first_layer].in_size) {
        throw DimensionError("forward: input width != layer in_size");
    }
    ForwardTrace t;
    t.post.push_back(input);
    for (int l = first_layer; l < last_layer; ++l) {
        const Eigen::MatrixXd z = (t.post.back() * model.weights[l].transpose()).rowwise() +
                                  model.biases[l].transpose();
        t.pre.push_back(z);
        t.post.push_back(activation_value(model, l, z));
    }
    return t;
}

ForwardTrace forward(const ModelState& model, const Eigen::MatrixXd& input) {
    return forward(model, input, 0, static_cast<int>(model.layers.size()));
}

double compute_loss(const ModelState& model, const Eigen::MatrixXd& predictions,
                    const Eigen::MatrixXd& labels) {
    const double b = static_cast<double>(predictions.rows());
    if (model.loss == Loss::mse) {
        return (predictions - labels).squaredNorm() / b;
    }
    double acc = 0;
    for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
        for (Eigen::Index j = 0; j < predictions.cols(); ++j) {
            const double p = std::clamp(predictions(i, j), 1e-12, 1.0 - 1e-12);
            acc -= labels(i, j) * std::log(p) + (1 - labels(i, j)) * std::log(1 - p);
        }
    }
    return acc / b;
}

Gradients backward(const ModelState& model, const ForwardTrace& trace,
                   const Eigen::MatrixXd& labels, int first_layer, int last_layer) {
    const int count = last_layer - first_layer;
    const double b = static_cast<double>(labels.rows());
    const Eigen::MatrixXd& predictions = trace.post.back();
    if (predictions.rows() != labels.rows() || predictions.cols() != labels.cols()) {
        throw DimensionError("backward: label shape mismatch");
    }

    Gradients g;
    g.weights.resize(count);
    g.biases.resize(count);

    Eigen::MatrixXd delta;  // dJ/dZ of the current layer
    if (model.loss == Loss::mse) {
        delta = (2.0 * (predictions - labels) / b).cwiseProduct(
            activation_derivative(model, last_layer - 1, trace.pre.back()));
    } else {
        // Sigmoid outputs with binary cross-entropy collapse to (p - y)/b.
        delta = (predictions - labels) / b;
    }

    for (int l = last_layer - 1; l >= first_layer; --l) {
        const int k = l - first_layer;
        g.weights[k] = delta.transpose() * trace.post[k];
        g.biases[k] = delta.colwise().sum().transpose();
        if (!g.weights[k].allFinite()) {
            throw Error("backward: non-finite gradient at layer " + std::to_string(l));
        }
        if (l > first_layer) {
            delta = (delta * model.weights[l]).cwiseProduct(
                activation_derivative(model, l - 1, trace.pre[k - 1]));
        } else {
            // dJ/d(input of the first traced layer). The split client turns
            // this into the boundary dJ/dZ by multiplying with the boundary
            // activation's derivative, which it evaluates on the decrypted
            // pre-activation.
            g.boundary_delta = delta * model.weights[l];
        }
    }
    return g;
}

Gradients backward(const ModelState& model, const ForwardTrace& trace,
                   const Eigen::MatrixXd& labels) {
    return backward(model, trace, labels, 0, static_cast<int>(model.layers.size()));
}

void sgd_update(ModelState& model, const Gradients& grads, double learning_rate, int first_layer,
                int last_layer) {
    for (int l = first_layer; l < last_layer; ++l) {
        const int k = l - first_layer;
        model.weights[l] -= learning_rate * grads.weights[k];
        model.biases[l] -= learning_rate * grads.biases[k];
    }
}

void sgd_update(ModelState& model, const Gradients& grads) {
    sgd_update(model, grads, model.learning_rate, 0, static_cast<int>(model.layers.size()));
}

double accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels) {
    int hits = 0;
    for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
        Eigen::Index pi, li;
        predictions.row(i).maxCoeff(&pi);
        labels.row(i).maxCoeff(&li);
        hits += pi == li;
    }
    return static_cast<double>(hits) / static_cast<double>(predictions.rows());
}

namespace {
constexpr char kCkptMagic[8] = {'H', 'S', 'M', 'O', 'D', 'L', '0', '1'};
}

void save_checkpoint(const ModelState& model, const std::string& path,
                     const std::string& config_hash) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("save_checkpoint: cannot open " + path);
    f.write(kCkptMagic, 8);
    const uint32_t hash_len = static_cast<uint32_t>(config_hash.size());
    f.write(reinterpret_cast<const char*>(&hash_len), 4);
    f.write(config_hash.data(), hash_len);
    const uint32_t layers = static_cast<uint32_t>(model.weights.size());
    f.write(reinterpret_cast<const char*>(&layers), 4);
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        const uint32_t r = static_cast<uint32_t>(model.weights[l].rows());
        const uint32_t c = static_cast<uint32_t>(model.weights[l].cols());
        f.write(reinterpret_cast<const char*>(&r), 4);
        f.write(reinterpret_cast<const char*>(&c), 4);
        for (uint32_t i = 0; i < r; ++i) {
            for (uint32_t j = 0; j < c; ++j) {
                const double v = model.weights[l](i, j);
                f.write(reinterpret_cast<const char*>(&v), 8);
            }
        }
        for (uint32_t i = 0; i < r; ++i) {
            const double v = model.biases[l](i);
            f.write(reinterpret_cast<const char*>(&v), 8);
        }
    }
}

ModelState load_checkpoint(const std::string& path, const std::string& expected_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCkptMagic, 8) != 0) throw ParseError("checkpoint: bad magic");
    uint32_t hash_len = 0;
    f.read(reinterpret_cast<char*>(&hash_len), 4);
    std::string hash(hash_len, '\0');
    f.read(hash.data(), hash_len);
    if (!expected_hash.empty() && hash != expected_hash) {
        throw ParseError("checkpoint: config hash mismatch");
    }
    uint32_t layers = 0;
    f.read(reinterpret_cast<char*>(&layers), 4);
    ModelState m;
    for (uint32_t l = 0; l < layers; ++l) {
        uint32_t r = 0, c = 0;
        f.read(reinterpret_cast<char*>(&r), 4);
        f.read(reinterpret_cast<char*>(&c), 4);
        if (!f) throw ParseError("checkpoint: truncated");
        Eigen::MatrixXd W(r, c);
        for (uint32_t i = 0; i < r; ++i) {
            for (uint32_t j = 0; j < c; ++j) {
                double v;
                f.read(reinterpret_cast<char*>(&v), 8);
                W(i, j) = v;
            }
        }
        Eigen::VectorXd b(r);
        for (uint32_t i = 0; i < r; ++i) {
            double v;
            f.read(reinterpret_cast<char*>(&v), 8);
            b(i) = v;
        }
        if (!f) throw ParseError("checkpoint: truncated");
        m.weights.push_back(std::move(W));
        m.biases.push_back(std::move(b));
        m.layers.push_back(make_layer(c, r, Activation::sigmoid));
    }
    m.approx.resize(m.layers.size());
    return m;
}

}  // namespace hesplit
