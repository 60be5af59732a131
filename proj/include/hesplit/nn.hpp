#ifndef HESPLIT_NN_HPP
#define HESPLIT_NN_HPP

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "hesplit/backend.hpp"

namespace hesplit {

double sigmoid(double x);

enum class Activation { sigmoid, approx_sigmoid, identity };
enum class Loss { mse, cross_entropy };

Activation activation_from_string(const std::string& s);

// Polynomial stand-in for a non-linear activation over [lo, hi]. Coefficients
// are monomial in the normalized variable y = (2x - (hi+lo)) / (hi - lo);
// levels_consumed is what the encrypted evaluation spends.
struct PolyApprox {
    std::vector<double> coefficients;  // degree+1 entries, basis below
    std::string basis = "monomial-normalized";
    double lo = -1.0, hi = 1.0;
    int levels_consumed = 0;  // ceil(log2(degree+1)), min 1
    double max_error = 0.0;   // dense-grid bound against the fitted target

    int degree() const { return static_cast<int>(coefficients.size()) - 1; }
    double operator()(double x) const;
    PolyApprox derivative() const;
};

// Chebyshev interpolation of the target on [lo, hi]; the error bound is
// re-measured on a dense grid and stored.
PolyApprox chebyshev_fit(const std::function<double(double)>& target, int degree, double lo,
                         double hi, int error_grid = 100000);
PolyApprox chebyshev_fit_sigmoid(int degree, double lo, double hi);

// Slotwise polynomial evaluation under encryption. Consumes exactly
// p.levels_consumed levels via power-of-two product chains; the result lands
// at the backend's nominal scale regardless of intermediate drift.
CipherValue eval_poly_encrypted(const CipherValue& ct, const PolyApprox& p,
                                const Backend& backend);

struct LayerSpec {
    int in_size = 0, out_size = 0;
    Activation activation = Activation::sigmoid;
    int degree = 7;             // approx_sigmoid only
    double lo = -15, hi = 15;   // approx_sigmoid interval
};

// Dense network state. Weights are (out x in); biases separate.
struct ModelState {
    std::vector<LayerSpec> layers;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    double learning_rate = 0.1;
    Loss loss = Loss::mse;
    // Fitted activation polynomials, one per approx_sigmoid layer (empty
    // entries elsewhere).
    std::vector<PolyApprox> approx;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases. Layer l
// draws from derive_seed(seed, l) so split and monolithic runs agree exactly.
ModelState init_model(const std::vector<LayerSpec>& layers, double learning_rate, Loss loss,
                      uint64_t seed);

LayerSpec make_layer(int in, int out, Activation act, int degree = 7, double lo = -15,
                     double hi = 15);

struct ForwardTrace {
    std::vector<Eigen::MatrixXd> pre;   // Z per layer (samples x units)
    std::vector<Eigen::MatrixXd> post;  // activations, post[0] = input
};

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    Eigen::MatrixXd boundary_delta;  // dJ/dZ of the first traced layer
};

// Forward/backward over layers [first_layer, last_layer).
ForwardTrace forward(const ModelState& model, const Eigen::MatrixXd& input, int first_layer,
                     int last_layer);
ForwardTrace forward(const ModelState& model, const Eigen::MatrixXd& input);

double compute_loss(const ModelState& model, const Eigen::MatrixXd& predictions,
                    const Eigen::MatrixXd& labels);

// Aborts with a diagnostic when gradients go non-finite.
Gradients backward(const ModelState& model, const ForwardTrace& trace,
                   const Eigen::MatrixXd& labels, int first_layer, int last_layer);
Gradients backward(const ModelState& model, const ForwardTrace& trace,
                   const Eigen::MatrixXd& labels);

void sgd_update(ModelState& model, const Gradients& grads, double learning_rate, int first_layer,
                int last_layer);
void sgd_update(ModelState& model, const Gradients& grads);

double accuracy(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& labels);

// Activation derivative used in backprop; approx_sigmoid differentiates the
// fitted polynomial, not the true sigmoid.
Eigen::MatrixXd activation_value(const ModelState& model, int layer, const Eigen::MatrixXd& z);
Eigen::MatrixXd activation_derivative(const ModelState& model, int layer,
                                      const Eigen::MatrixXd& z);

// Versioned checkpoint: shapes, weights and biases as f64 little-endian,
// plus a config hash guarding against mismatched reloads.
void save_checkpoint(const ModelState& model, const std::string& path,
                     const std::string& config_hash);
ModelState load_checkpoint(const std::string& path, const std::string& expected_hash);

}  // namespace hesplit

#endif
