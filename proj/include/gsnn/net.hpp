#pragma once

// Semiclassical and classical probabilistic-numeric networks: symplectic
// linear layers with exponential parametrization, classical Hamiltonian-flow
// nonlinearities, invertible pooling, the phase-space sampler, forward pass,
// training, and the classical network used as the duality oracle.

#include "gsnn/gp.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace gsnn {

enum class ModelKind { bnn, pnn, spnn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct NetConfig {
    int layers = 3;  // total linear layers: (layers-1) linear+nonlinearity pairs, then one final
    int channels = 2;
    int grid_size = 1;
    double beta = 0.1;
    int n_samples = 100;
    ModelKind kind = ModelKind::spnn;
    bool equivariant = false;
    bool pooling = false;  // global invertible pooling before the final layer
    int n_classes = 2;

    int modes() const { return channels * grid_size; }
    void validate() const;
};

// pnn/spnn layers carry generator blocks over modes() and a bias of length
// 2*modes() (pnn keeps the momentum half at zero); bnn layers carry a dense
// position-space weight and a bias of length modes().
struct LayerParams {
    BlockGenerator gen;
    MatrixXd dense;
    VectorXd bias;
};

struct Network {
    NetConfig cfg;
    std::vector<LayerParams> layers;
};

// Kaiming-uniform fan-in init on the parameter blocks, scaled by 0.1 for
// spnn generators. Biases start at zero.
Network init_network(const NetConfig& cfg, std::uint64_t seed);

// Monte-Carlo phase-space batch. z is 2M x n_samples with the position block
// first and mode index = channel * grid + site; conceptually a
// (samples, channels, grid, 2) tensor.
struct SampleBatch {
    MatrixXd z;
    int channels = 1;
    int grid = 1;

    int modes() const { return channels * grid; }
    int samples() const { return static_cast<int>(z.cols()); }
    double phi(int sample, int channel, int site) const {
        return z(channel * grid + site, sample);
    }
    double pi(int sample, int channel, int site) const {
        return z(modes() + channel * grid + site, sample);
    }
};

// Mean and covariance of the sampling normal over all 2*N_C*|X| phase-space
// coordinates: posterior mean and covariance on the channel-0 position
// block, inverse covariance on the channel-0 momentum block, identity
// elsewhere, zero cross blocks.
std::pair<VectorXd, MatrixXd> build_sampling_distribution(const GpPosterior& post,
                                                          int n_channels);

// Reference sampler: mean + chol(cov) * eps with eps standard normal.
SampleBatch draw_samples(const VectorXd& mean, const MatrixXd& cov, int channels,
                         int grid, int n_samples, std::uint64_t seed);

// Fast path using the posterior's cached factors; consumes eps (2M x n) in
// the same layout, so it matches draw_samples for the same seed.
SampleBatch draw_batch(const GpPosterior& post, int channels, const MatrixXd& eps);

// Numerically stable softplus with temperature beta.
double softplus(double x, double beta);

// The time-1 flow of the softplus Hamiltonian:
// (phi, pi) -> (softplus_beta(phi), pi * (1 + exp(-beta*phi))).
std::pair<double, double> symplectic_softplus(double phi, double pi, double beta);
SampleBatch symplectic_softplus(const SampleBatch& batch, double beta);

// Flow of H = pi f(phi) for time t: phi(t) = F_inv(F(phi) + t),
// pi(t) = pi f(phi) / f(phi(t)), where F' = 1/f. Throws FlowDomainError with
// the offending coordinate when the flow leaves its domain.
SampleBatch classical_flow(const std::function<double(double)>& f,
                           const std::function<double(double)>& big_f,
                           const std::function<double(double)>& big_f_inverse,
                           double t, const SampleBatch& batch);

// z -> S z + xi applied to every sample.
SampleBatch linear_layer(const SampleBatch& batch, const MatrixXd& s,
                         const VectorXd& xi);

// Invertible global average pooling on one spatial block: first position
// coordinate becomes the spatial mean, the rest stay; momenta transform by
// (P^{-1})^T so the lift P + (P^{-1})^T is symplectic.
MatrixXd pooling_matrix(int grid);
MatrixXd pooling_symplectic(int channels, int grid);
SampleBatch pooling(const SampleBatch& batch);

// exp(D) with D = sum_i alphas[i] * d^i, d the periodic forward difference.
MatrixXd make_diff_operator(const std::vector<double>& alphas, int grid);

// Commutation residual ||S S_g - S_g S||_inf against the symplectic lift
// tau + tau of the cyclic site shift.
double check_translation_equivariance(const MatrixXd& s, int channels, int grid,
                                      int shift = 1);

// Readout coordinate for class c: channel c mod N_C at site c div N_C, which
// is site 0 of each channel whenever n_classes <= channels.
int readout_mode(int class_index, int channels, int grid);

// Materialized symplectic weight matrix of one layer (bnn: position-space
// dense weight).
MatrixXd layer_matrix(const NetConfig& cfg, const LayerParams& layer);

// Monte-Carlo logits of the semiclassical forward pass (Algorithm:
// sample, (layers-1) linear+nonlinearity pairs, optional pooling, final
// linear layer, average the readout position coordinates).
VectorXd forward(const Network& net, const GpPosterior& post, std::uint64_t seed);
VectorXd forward_with_eps(const Network& net, const GpPosterior& post,
                          const MatrixXd& eps);

// Classical probabilistic-numeric network: pushes position-sector samples of
// the GP posterior through dense layers with classical softplus. Used as the
// cross-model oracle for the block-diagonal duality.
struct ClassicalLayer {
    MatrixXd weight;
    VectorXd bias;
};

struct ClassicalNet {
    std::vector<ClassicalLayer> layers;  // may be empty
    int channels = 1;
    int grid = 1;
    double beta = 0.1;
    bool pooling = false;
    int n_classes = 1;
};

VectorXd pncnn_forward(const ClassicalNet& net, const GpPosterior& post,
                       const MatrixXd& eps_phi);
VectorXd pncnn_forward(const ClassicalNet& net, const GpPosterior& post,
                       int n_samples, std::uint64_t seed);

// Block-diagonal embedding of a network into the classical oracle:
// weight = exp(A), bias = position half.
ClassicalNet as_classical(const Network& net);

// Labeled posterior collection sharing one mask: per-series means plus the
// common covariance factors.
struct ClassificationData {
    MatrixXd means;  // grid x n_series
    GpPosterior shared;
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }
};

struct Gradients {
    struct Layer {
        MatrixXd a, b, c, dense;
        VectorXd bias;
    };
    std::vector<Layer> layers;
};

// Cross-entropy loss of the batch under fixed noise draws; fills analytic
// gradients when grads is non-null.
double loss_and_gradient(const Network& net, const MatrixXd& means,
                         const std::vector<int>& labels, const GpPosterior& shared,
                         const MatrixXd& eps, Gradients* grads);

// Central finite differences over the free parameters, same eps. Reference
// path for the analytic gradients.
Gradients finite_difference_gradient(const Network& net, const MatrixXd& means,
                                     const std::vector<int>& labels,
                                     const GpPosterior& shared, const MatrixXd& eps,
                                     double step = 1e-5);

// Iterates fn over every free parameter of the network, in a fixed order.
void for_each_free_param(Network& net, const std::function<void(double&)>& fn);
void for_each_free_param(const Network& net, const Gradients& grads,
                         const std::function<void(double, double)>& fn);

struct TrainOptions {
    int epochs = 1000;
    double learning_rate = 1e-3;
    int batch_size = 50;
    std::uint64_t sampler_seed = 0;
    bool analytic_gradients = true;
    double fd_step = 1e-5;
    int curve_every = 0;  // 0: record only the final row
    std::uint64_t eval_seed = 1;
};

struct CurveRow {
    int epoch;
    double loss;
    double train_accuracy;
    double test_accuracy;  // NaN when no test data
};

struct TrainResult {
    std::vector<CurveRow> curve;
};

TrainResult train(Network& net, const ClassificationData& train_data,
                  const ClassificationData* test_data, const TrainOptions& opts);

// Percent of correctly classified series at fixed sampler seed.
double evaluate(const Network& net, const ClassificationData& data,
                std::uint64_t seed);

VectorXd logits_for_series(const Network& net, const ClassificationData& data,
                           int series, std::uint64_t seed);

}  // namespace gsnn
