#include "gsnn/net.hpp"

#include "gsnn/errors.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace gsnn {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::bnn: return "bnn";
        case ModelKind::pnn: return "pnn";
        case ModelKind::spnn: return "spnn";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "bnn") return ModelKind::bnn;
    if (name == "pnn") return ModelKind::pnn;
    if (name == "spnn") return ModelKind::spnn;
    throw std::invalid_argument("unknown model kind: " + name);
}

void NetConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("net: layers must be >= 1");
    if (channels < 1) throw std::invalid_argument("net: channels must be >= 1");
    if (grid_size < 1) throw std::invalid_argument("net: grid_size must be >= 1");
    if (!(beta > 0.0)) throw std::invalid_argument("net: beta must be positive");
    if (n_samples < 1) throw std::invalid_argument("net: n_samples must be >= 1");
    if (n_classes < 1 || n_classes > modes())
        throw std::invalid_argument("net: n_classes must be in [1, modes]");
}

int readout_mode(int class_index, int channels, int grid) {
    return (class_index % channels) * grid + class_index / channels;
}

namespace {

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// exp(-beta*phi) with the exponent clamped so outputs stay finite.
double neg_exp(double beta, double phi) {
    return std::exp(std::min(700.0, -beta * phi));
}

MatrixXd circulant_project(const MatrixXd& block) {
    const auto g = block.rows();
    MatrixXd out(g, g);
    for (Eigen::Index d = 0; d < g; ++d) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < g; ++i) sum += block(i, (i + d) % g);
        const double avg = sum / static_cast<double>(g);
        for (Eigen::Index i = 0; i < g; ++i) out(i, (i + d) % g) = avg;
    }
    return out;
}

// Projects every (channel, channel) sub-block onto circulants in the site
// indices.
void circulant_project_blocks(MatrixXd& m, int channels, int grid) {
    for (int a = 0; a < channels; ++a)
        for (int b = 0; b < channels; ++b)
            m.block(a * grid, b * grid, grid, grid) =
                circulant_project(m.block(a * grid, b * grid, grid, grid));
}

// Translation-equivariant structure: circulant weight blocks, per-channel
// constant biases.
void equivariant_project_bias(VectorXd& bias, int grid) {
    const auto blocks = bias.size() / grid;
    for (Eigen::Index b = 0; b < blocks; ++b)
        bias.segment(b * grid, grid).setConstant(bias.segment(b * grid, grid).mean());
}

void equivariant_project(Gradients::Layer& gl, const NetConfig& cfg) {
    if (gl.a.size()) circulant_project_blocks(gl.a, cfg.channels, cfg.grid_size);
    if (gl.b.size()) circulant_project_blocks(gl.b, cfg.channels, cfg.grid_size);
    if (gl.c.size()) circulant_project_blocks(gl.c, cfg.channels, cfg.grid_size);
    if (gl.dense.size()) circulant_project_blocks(gl.dense, cfg.channels, cfg.grid_size);
    if (gl.bias.size()) equivariant_project_bias(gl.bias, cfg.grid_size);
}

}  // namespace

Network init_network(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int m = cfg.modes();
    std::mt19937_64 rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(m));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    auto fill = [&](MatrixXd& mat, double scale) {
        mat.resize(m, m);
        for (Eigen::Index c = 0; c < m; ++c)
            for (Eigen::Index r = 0; r < m; ++r) mat(r, c) = scale * uniform(rng);
        if (cfg.equivariant) circulant_project_blocks(mat, cfg.channels, cfg.grid_size);
    };

    Network net{cfg, {}};
    net.layers.resize(cfg.layers);
    for (auto& layer : net.layers) {
        switch (cfg.kind) {
            case ModelKind::bnn:
                fill(layer.dense, 1.0);
                layer.bias = VectorXd::Zero(m);
                break;
            case ModelKind::pnn:
                fill(layer.gen.a, 1.0);
                layer.gen.b = MatrixXd::Zero(m, m);
                layer.gen.c = MatrixXd::Zero(m, m);
                layer.bias = VectorXd::Zero(2 * m);
                break;
            case ModelKind::spnn:
                fill(layer.gen.a, 0.1);
                fill(layer.gen.b, 0.1);
                fill(layer.gen.c, 0.1);
                layer.bias = VectorXd::Zero(2 * m);
                break;
        }
    }
    return net;
}

std::pair<VectorXd, MatrixXd> build_sampling_distribution(const GpPosterior& post,
                                                          int n_channels) {
    if (n_channels < 1)
        throw std::invalid_argument("build_sampling_distribution: channels must be >= 1");
    const auto g = post.mean.size();
    const auto m = static_cast<Eigen::Index>(n_channels) * g;
    VectorXd mean = VectorXd::Zero(2 * m);
    mean.head(g) = post.mean;
    MatrixXd cov = MatrixXd::Identity(2 * m, 2 * m);
    cov.topLeftCorner(g, g) = post.cov;
    cov.block(m, m, g, g) = post.chol_prec * post.chol_prec.transpose();
    return {std::move(mean), std::move(cov)};
}

SampleBatch draw_samples(const VectorXd& mean, const MatrixXd& cov, int channels,
                         int grid, int n_samples, std::uint64_t seed) {
    const auto dim = mean.size();
    if (cov.rows() != dim || cov.cols() != dim)
        throw std::invalid_argument("draw_samples: mean/cov shape mismatch");
    if (dim != 2LL * channels * grid)
        throw std::invalid_argument("draw_samples: dimension does not match channels*grid");
    const MatrixXd l = cholesky(cov);
    const MatrixXd eps = standard_normal(static_cast<int>(dim), n_samples, seed);
    SampleBatch batch{(l * eps).colwise() + mean, channels, grid};
    return batch;
}

SampleBatch draw_batch(const GpPosterior& post, int channels, const MatrixXd& eps) {
    const auto g = post.mean.size();
    const auto m = static_cast<Eigen::Index>(channels) * g;
    if (eps.rows() != 2 * m)
        throw std::invalid_argument("draw_batch: eps row count mismatch");
    MatrixXd z = eps;
    z.topRows(g) = (post.chol_cov * eps.topRows(g)).colwise() + post.mean;
    z.middleRows(m, g) = post.chol_prec * eps.middleRows(m, g);
    return {std::move(z), channels, static_cast<int>(g)};
}

double softplus(double x, double beta) {
    const double t = beta * x;
    if (t > 0.0) return x + std::log1p(std::exp(-t)) / beta;
    return std::log1p(std::exp(t)) / beta;
}

std::pair<double, double> symplectic_softplus(double phi, double pi, double beta) {
    return {softplus(phi, beta), pi * (1.0 + neg_exp(beta, phi))};
}

SampleBatch symplectic_softplus(const SampleBatch& batch, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("symplectic_softplus: beta must be positive");
    SampleBatch out = batch;
    const int m = batch.modes();
    for (Eigen::Index col = 0; col < out.z.cols(); ++col) {
        for (int r = 0; r < m; ++r) {
            const double phi = out.z(r, col);
            out.z(m + r, col) *= 1.0 + neg_exp(beta, phi);
            out.z(r, col) = softplus(phi, beta);
        }
    }
    return out;
}

SampleBatch classical_flow(const std::function<double(double)>& f,
                           const std::function<double(double)>& big_f,
                           const std::function<double(double)>& big_f_inverse,
                           double t, const SampleBatch& batch) {
    SampleBatch out = batch;
    const int m = batch.modes();
    for (Eigen::Index col = 0; col < out.z.cols(); ++col) {
        for (int r = 0; r < m; ++r) {
            const double phi0 = out.z(r, col);
            const double phi_t = big_f_inverse(big_f(phi0) + t);
            if (!std::isfinite(phi_t))
                throw FlowDomainError("classical_flow: flow left the domain of F_inverse",
                                      phi0, col * 2 * m + r);
            const double denom = f(phi_t);
            if (denom == 0.0 || !std::isfinite(denom))
                throw FlowDomainError("classical_flow: f vanished along the flow", phi_t,
                                      col * 2 * m + r);
            out.z(m + r, col) *= f(phi0) / denom;
            out.z(r, col) = phi_t;
        }
    }
    return out;
}

SampleBatch linear_layer(const SampleBatch& batch, const MatrixXd& s,
                         const VectorXd& xi) {
    if (s.rows() != batch.z.rows() || s.cols() != batch.z.rows())
        throw std::invalid_argument("linear_layer: weight shape mismatch");
    if (xi.size() != batch.z.rows())
        throw std::invalid_argument("linear_layer: bias shape mismatch");
    return {(s * batch.z).colwise() + xi, batch.channels, batch.grid};
}

MatrixXd pooling_matrix(int grid) {
    if (grid < 1) throw std::invalid_argument("pooling_matrix: grid must be >= 1");
    MatrixXd p = MatrixXd::Identity(grid, grid);
    p.row(0).setConstant(1.0 / static_cast<double>(grid));
    return p;
}

MatrixXd pooling_symplectic(int channels, int grid) {
    const int m = channels * grid;
    const MatrixXd p = pooling_matrix(grid);
    const MatrixXd p_inv_t =
        p.inverse().transpose();
    MatrixXd s = MatrixXd::Zero(2 * m, 2 * m);
    for (int c = 0; c < channels; ++c) {
        s.block(c * grid, c * grid, grid, grid) = p;
        s.block(m + c * grid, m + c * grid, grid, grid) = p_inv_t;
    }
    return s;
}

SampleBatch pooling(const SampleBatch& batch) {
    const MatrixXd s = pooling_symplectic(batch.channels, batch.grid);
    return {s * batch.z, batch.channels, batch.grid};
}

MatrixXd make_diff_operator(const std::vector<double>& alphas, int grid) {
    if (grid < 1) throw std::invalid_argument("make_diff_operator: grid must be >= 1");
    for (double a : alphas)
        if (!std::isfinite(a))
            throw std::invalid_argument("make_diff_operator: non-finite coefficient");
    MatrixXd shift = MatrixXd::Zero(grid, grid);
    for (int x = 0; x < grid; ++x) shift(x, (x + 1) % grid) = 1.0;
    const MatrixXd diff = shift - MatrixXd::Identity(grid, grid);
    MatrixXd d = MatrixXd::Zero(grid, grid);
    MatrixXd power = MatrixXd::Identity(grid, grid);
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        d += alphas[i] * power;
        power = (power * diff).eval();
    }
    return matrix_exp(d);
}

double check_translation_equivariance(const MatrixXd& s, int channels, int grid,
                                      int shift) {
    const int m = channels * grid;
    if (s.rows() != 2 * m || s.cols() != 2 * m)
        throw std::invalid_argument("check_translation_equivariance: shape mismatch");
    MatrixXd tau = MatrixXd::Zero(m, m);
    for (int c = 0; c < channels; ++c)
        for (int x = 0; x < grid; ++x)
            tau(c * grid + x, c * grid + (x + shift % grid + grid) % grid) = 1.0;
    MatrixXd sg = MatrixXd::Zero(2 * m, 2 * m);
    sg.topLeftCorner(m, m) = tau;
    sg.bottomRightCorner(m, m) = tau;
    return (s * sg - sg * s).cwiseAbs().maxCoeff();
}

MatrixXd layer_matrix(const NetConfig& cfg, const LayerParams& layer) {
    const int m = cfg.modes();
    switch (cfg.kind) {
        case ModelKind::bnn:
            return layer.dense;
        case ModelKind::pnn: {
            MatrixXd s = MatrixXd::Zero(2 * m, 2 * m);
            s.topLeftCorner(m, m) = matrix_exp(layer.gen.a);
            s.bottomRightCorner(m, m) = matrix_exp(-layer.gen.a.transpose());
            return s;
        }
        case ModelKind::spnn:
            return symplectic_from_generator(layer.gen);
    }
    throw std::invalid_argument("layer_matrix: unknown kind");
}

namespace {

struct Tape {
    std::vector<MatrixXd> lin_in;   // input of each linear layer
    std::vector<MatrixXd> nl_in;    // input of each nonlinearity
    MatrixXd pool_in;
    MatrixXd out;
};

// Applies softplus to the position rows; spnn also evolves the momenta.
void apply_nonlinearity(MatrixXd& z, const NetConfig& cfg) {
    const int m = cfg.modes();
    if (cfg.kind == ModelKind::spnn) {
        for (Eigen::Index col = 0; col < z.cols(); ++col)
            for (int r = 0; r < m; ++r) {
                const double phi = z(r, col);
                z(m + r, col) *= 1.0 + neg_exp(cfg.beta, phi);
                z(r, col) = softplus(phi, cfg.beta);
            }
    } else {
        for (Eigen::Index col = 0; col < z.cols(); ++col)
            for (int r = 0; r < m; ++r) z(r, col) = softplus(z(r, col), cfg.beta);
    }
}

MatrixXd initial_batch(const Network& net, const MatrixXd& means,
                       const GpPosterior& shared, const MatrixXd& eps) {
    const NetConfig& cfg = net.cfg;
    const int g = cfg.grid_size;
    const int m = cfg.modes();
    const auto n_series = means.cols();

    if (cfg.kind == ModelKind::bnn) {
        MatrixXd z = MatrixXd::Zero(m, n_series);
        z.topRows(g) = means;
        return z;
    }
    const auto cols = eps.cols();
    if (cols % n_series != 0)
        throw std::invalid_argument("initial_batch: eps columns not a multiple of series");
    const auto n = cols / n_series;
    MatrixXd z = eps;
    z.topRows(g) = shared.chol_cov * eps.topRows(g);
    for (Eigen::Index s = 0; s < n_series; ++s)
        z.block(0, s * n, g, n).colwise() += means.col(s);
    z.middleRows(m, g) = shared.chol_prec * eps.middleRows(m, g);
    return z;
}

VectorXd logits_from_output(const MatrixXd& out, const NetConfig& cfg,
                            Eigen::Index series, Eigen::Index n_per_series) {
    VectorXd logits(cfg.n_classes);
    for (int c = 0; c < cfg.n_classes; ++c) {
        const int row = readout_mode(c, cfg.channels, cfg.grid_size);
        // Fixed traversal order, so logits are bit-stable across batchings.
        logits(c) = out.row(row).segment(series * n_per_series, n_per_series).sum() /
                    static_cast<double>(n_per_series);
    }
    return logits;
}

MatrixXd forward_core(const Network& net, const MatrixXd& means,
                      const GpPosterior& shared, const MatrixXd& eps, Tape* tape,
                      const std::vector<MatrixXd>& mats, const MatrixXd& pool) {
    const NetConfig& cfg = net.cfg;
    MatrixXd z = initial_batch(net, means, shared, eps);
    const int total = cfg.layers;
    for (int l = 0; l < total - 1; ++l) {
        if (tape) tape->lin_in.push_back(z);
        z = (mats[l] * z).colwise() + net.layers[l].bias;
        if (tape) tape->nl_in.push_back(z);
        apply_nonlinearity(z, cfg);
    }
    if (cfg.pooling) {
        if (tape) tape->pool_in = z;
        z = pool * z;
    }
    if (tape) tape->lin_in.push_back(z);
    z = (mats[total - 1] * z).colwise() + net.layers[total - 1].bias;
    if (tape) tape->out = z;
    return z;
}

std::vector<MatrixXd> materialize_layers(const Network& net) {
    std::vector<MatrixXd> mats;
    mats.reserve(net.layers.size());
    for (const auto& layer : net.layers) mats.push_back(layer_matrix(net.cfg, layer));
    return mats;
}

MatrixXd pooling_operator(const NetConfig& cfg) {
    if (!cfg.pooling) return MatrixXd();
    if (cfg.kind == ModelKind::bnn) {
        const int m = cfg.modes();
        MatrixXd p = MatrixXd::Zero(m, m);
        const MatrixXd site = pooling_matrix(cfg.grid_size);
        for (int c = 0; c < cfg.channels; ++c)
            p.block(c * cfg.grid_size, c * cfg.grid_size, cfg.grid_size, cfg.grid_size) =
                site;
        return p;
    }
    return pooling_symplectic(cfg.channels, cfg.grid_size);
}

double cross_entropy(const VectorXd& logits, int label, VectorXd* dlogits) {
    const double max_logit = logits.maxCoeff();
    const VectorXd shifted = logits.array() - max_logit;
    const VectorXd exps = shifted.array().exp();
    const double z = exps.sum();
    if (dlogits) {
        *dlogits = exps / z;
        (*dlogits)(label) -= 1.0;
    }
    return std::log(z) - shifted(label);
}

void backprop_nonlinearity(MatrixXd& g, const MatrixXd& input, const NetConfig& cfg) {
    const int m = cfg.modes();
    if (cfg.kind == ModelKind::spnn) {
        for (Eigen::Index col = 0; col < g.cols(); ++col)
            for (int r = 0; r < m; ++r) {
                const double phi = input(r, col);
                const double pi = input(m + r, col);
                const double e = neg_exp(cfg.beta, phi);
                const double gphi = g(r, col);
                const double gpi = g(m + r, col);
                g(r, col) = gphi * sigmoid(cfg.beta * phi) - gpi * cfg.beta * pi * e;
                g(m + r, col) = gpi * (1.0 + e);
            }
    } else {
        for (Eigen::Index col = 0; col < g.cols(); ++col)
            for (int r = 0; r < m; ++r)
                g(r, col) *= sigmoid(cfg.beta * input(r, col));
    }
}

Gradients::Layer weight_gradient(const NetConfig& cfg, const LayerParams& layer,
                                 const MatrixXd& g_s, const VectorXd& g_bias) {
    Gradients::Layer out;
    const int m = cfg.modes();
    switch (cfg.kind) {
        case ModelKind::bnn:
            out.dense = g_s;
            out.bias = g_bias;
            break;
        case ModelKind::pnn:
            out.a = matrix_exp_adjoint(layer.gen.a, g_s.topLeftCorner(m, m));
            out.bias = g_bias;
            out.bias.tail(m).setZero();
            break;
        case ModelKind::spnn: {
            const MatrixXd x = generator_matrix(layer.gen);
            const MatrixXd gx = matrix_exp_adjoint(x, g_s);
            out.a = gx.topLeftCorner(m, m) - gx.bottomRightCorner(m, m).transpose();
            out.b = 0.5 * (gx.topRightCorner(m, m) + gx.topRightCorner(m, m).transpose());
            out.c = 0.5 * (gx.bottomLeftCorner(m, m) + gx.bottomLeftCorner(m, m).transpose());
            out.bias = g_bias;
            break;
        }
    }
    if (cfg.equivariant) equivariant_project(out, cfg);
    return out;
}

}  // namespace

VectorXd forward_with_eps(const Network& net, const GpPosterior& post,
                          const MatrixXd& eps) {
    net.cfg.validate();
    if (static_cast<int>(post.mean.size()) != net.cfg.grid_size)
        throw std::invalid_argument("forward: posterior grid does not match net");
    MatrixXd means(net.cfg.grid_size, 1);
    means.col(0) = post.mean;
    const auto mats = materialize_layers(net);
    const MatrixXd pool = pooling_operator(net.cfg);
    const MatrixXd out = forward_core(net, means, post, eps, nullptr, mats, pool);
    const auto n = net.cfg.kind == ModelKind::bnn ? 1 : eps.cols();
    return logits_from_output(out, net.cfg, 0, n);
}

VectorXd forward(const Network& net, const GpPosterior& post, std::uint64_t seed) {
    const int dim = 2 * net.cfg.modes();
    const MatrixXd eps = net.cfg.kind == ModelKind::bnn
                             ? MatrixXd(dim, 0)
                             : standard_normal(dim, net.cfg.n_samples, seed);
    return forward_with_eps(net, post, eps);
}

VectorXd pncnn_forward(const ClassicalNet& net, const GpPosterior& post,
                       const MatrixXd& eps_phi) {
    const int g = static_cast<int>(post.mean.size());
    const int m = net.channels * net.grid;
    if (net.grid != g)
        throw std::invalid_argument("pncnn_forward: posterior grid does not match net");
    if (eps_phi.rows() != m)
        throw std::invalid_argument("pncnn_forward: eps row count mismatch");

    MatrixXd z = eps_phi;
    z.topRows(g) = (post.chol_cov * eps_phi.topRows(g)).colwise() + post.mean;

    const auto total = static_cast<int>(net.layers.size());
    for (int l = 0; l + 1 < total; ++l) {
        z = (net.layers[l].weight * z).colwise() + net.layers[l].bias;
        for (Eigen::Index col = 0; col < z.cols(); ++col)
            for (int r = 0; r < m; ++r) z(r, col) = softplus(z(r, col), net.beta);
    }
    if (net.pooling) {
        const MatrixXd site = pooling_matrix(net.grid);
        for (int c = 0; c < net.channels; ++c)
            z.middleRows(c * net.grid, net.grid) =
                (site * z.middleRows(c * net.grid, net.grid)).eval();
    }
    if (total > 0)
        z = (net.layers[total - 1].weight * z).colwise() + net.layers[total - 1].bias;

    VectorXd logits(net.n_classes);
    for (int c = 0; c < net.n_classes; ++c)
        logits(c) = z.row(readout_mode(c, net.channels, net.grid)).mean();
    return logits;
}

VectorXd pncnn_forward(const ClassicalNet& net, const GpPosterior& post,
                       int n_samples, std::uint64_t seed) {
    const MatrixXd eps = standard_normal(net.channels * net.grid, n_samples, seed);
    return pncnn_forward(net, post, eps);
}

ClassicalNet as_classical(const Network& net) {
    if (net.cfg.kind == ModelKind::bnn)
        throw std::invalid_argument("as_classical: expects an exponentially parametrized net");
    ClassicalNet out;
    out.channels = net.cfg.channels;
    out.grid = net.cfg.grid_size;
    out.beta = net.cfg.beta;
    out.pooling = net.cfg.pooling;
    out.n_classes = net.cfg.n_classes;
    const int m = net.cfg.modes();
    for (const auto& layer : net.layers)
        out.layers.push_back({matrix_exp(layer.gen.a), layer.bias.head(m)});
    return out;
}

double loss_and_gradient(const Network& net, const MatrixXd& means,
                         const std::vector<int>& labels, const GpPosterior& shared,
                         const MatrixXd& eps, Gradients* grads) {
    const NetConfig& cfg = net.cfg;
    cfg.validate();
    const auto n_series = means.cols();
    if (static_cast<Eigen::Index>(labels.size()) != n_series)
        throw std::invalid_argument("loss: labels/means mismatch");
    for (int label : labels)
        if (label < 0 || label >= cfg.n_classes)
            throw std::invalid_argument("loss: label out of range");

    const auto mats = materialize_layers(net);
    const MatrixXd pool = pooling_operator(cfg);
    Tape tape;
    const MatrixXd out = forward_core(net, means, shared, eps, &tape, mats, pool);
    const auto n = cfg.kind == ModelKind::bnn ? 1 : eps.cols() / n_series;

    double loss = 0.0;
    MatrixXd g = MatrixXd::Zero(out.rows(), out.cols());
    for (Eigen::Index s = 0; s < n_series; ++s) {
        const VectorXd logits = logits_from_output(out, cfg, s, n);
        VectorXd dlogits;
        loss += cross_entropy(logits, labels[s], grads ? &dlogits : nullptr);
        if (grads) {
            const double w = 1.0 / (static_cast<double>(n_series) * static_cast<double>(n));
            for (int c = 0; c < cfg.n_classes; ++c) {
                const int row = readout_mode(c, cfg.channels, cfg.grid_size);
                g.row(row).segment(s * n, n).array() += dlogits(c) * w;
            }
        }
    }
    loss /= static_cast<double>(n_series);
    if (!grads) return loss;

    grads->layers.assign(cfg.layers, {});
    for (int l = cfg.layers - 1; l >= 0; --l) {
        const MatrixXd g_s = g * tape.lin_in[l].transpose();
        const VectorXd g_bias = g.rowwise().sum();
        grads->layers[l] = weight_gradient(cfg, net.layers[l], g_s, g_bias);
        g = (mats[l].transpose() * g).eval();
        if (l == cfg.layers - 1 && cfg.pooling) g = (pool.transpose() * g).eval();
        if (l > 0) backprop_nonlinearity(g, tape.nl_in[l - 1], cfg);
    }
    return loss;
}

void for_each_free_param(Network& net, const std::function<void(double&)>& fn) {
    const int m = net.cfg.modes();
    for (auto& layer : net.layers) {
        switch (net.cfg.kind) {
            case ModelKind::bnn:
                for (Eigen::Index i = 0; i < layer.dense.size(); ++i) fn(layer.dense(i));
                for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias(i));
                break;
            case ModelKind::pnn:
                for (Eigen::Index i = 0; i < layer.gen.a.size(); ++i) fn(layer.gen.a(i));
                for (Eigen::Index i = 0; i < m; ++i) fn(layer.bias(i));
                break;
            case ModelKind::spnn:
                for (Eigen::Index i = 0; i < layer.gen.a.size(); ++i) fn(layer.gen.a(i));
                for (Eigen::Index i = 0; i < layer.gen.b.size(); ++i) fn(layer.gen.b(i));
                for (Eigen::Index i = 0; i < layer.gen.c.size(); ++i) fn(layer.gen.c(i));
                for (Eigen::Index i = 0; i < layer.bias.size(); ++i) fn(layer.bias(i));
                break;
        }
    }
}

void for_each_free_param(const Network& net, const Gradients& grads,
                         const std::function<void(double, double)>& fn) {
    const int m = net.cfg.modes();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        const auto& gl = grads.layers[l];
        switch (net.cfg.kind) {
            case ModelKind::bnn:
                for (Eigen::Index i = 0; i < layer.dense.size(); ++i)
                    fn(layer.dense(i), gl.dense(i));
                for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
                    fn(layer.bias(i), gl.bias(i));
                break;
            case ModelKind::pnn:
                for (Eigen::Index i = 0; i < layer.gen.a.size(); ++i)
                    fn(layer.gen.a(i), gl.a(i));
                for (Eigen::Index i = 0; i < m; ++i) fn(layer.bias(i), gl.bias(i));
                break;
            case ModelKind::spnn:
                for (Eigen::Index i = 0; i < layer.gen.a.size(); ++i)
                    fn(layer.gen.a(i), gl.a(i));
                for (Eigen::Index i = 0; i < layer.gen.b.size(); ++i)
                    fn(layer.gen.b(i), gl.b(i));
                for (Eigen::Index i = 0; i < layer.gen.c.size(); ++i)
                    fn(layer.gen.c(i), gl.c(i));
                for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
                    fn(layer.bias(i), gl.bias(i));
                break;
        }
    }
}

Gradients finite_difference_gradient(const Network& net, const MatrixXd& means,
                                     const std::vector<int>& labels,
                                     const GpPosterior& shared, const MatrixXd& eps,
                                     double step) {
    Network work = net;
    std::vector<double*> params;
    for_each_free_param(work, [&](double& v) { params.push_back(&v); });

    std::vector<double> fd(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = *params[i];
        *params[i] = saved + step;
        const double up = loss_and_gradient(work, means, labels, shared, eps, nullptr);
        *params[i] = saved - step;
        const double down = loss_and_gradient(work, means, labels, shared, eps, nullptr);
        *params[i] = saved;
        fd[i] = (up - down) / (2.0 * step);
    }

    // Pack the flat values back into the gradient structure by reusing the
    // parameter enumeration order.
    Gradients grads;
    grads.layers.assign(net.layers.size(), {});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        auto& gl = grads.layers[l];
        gl.a = MatrixXd::Zero(layer.gen.a.rows(), layer.gen.a.cols());
        gl.b = MatrixXd::Zero(layer.gen.b.rows(), layer.gen.b.cols());
        gl.c = MatrixXd::Zero(layer.gen.c.rows(), layer.gen.c.cols());
        gl.dense = MatrixXd::Zero(layer.dense.rows(), layer.dense.cols());
        gl.bias = VectorXd::Zero(layer.bias.size());
    }
    std::size_t cursor = 0;
    Network shadow = net;
    for_each_free_param(shadow, [&](double&) { ++cursor; });
    if (cursor != params.size())
        throw std::logic_error("finite_difference_gradient: enumeration mismatch");

    cursor = 0;
    const int m = net.cfg.modes();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& gl = grads.layers[l];
        switch (net.cfg.kind) {
            case ModelKind::bnn:
                for (Eigen::Index i = 0; i < gl.dense.size(); ++i) gl.dense(i) = fd[cursor++];
                for (Eigen::Index i = 0; i < gl.bias.size(); ++i) gl.bias(i) = fd[cursor++];
                break;
            case ModelKind::pnn:
                for (Eigen::Index i = 0; i < gl.a.size(); ++i) gl.a(i) = fd[cursor++];
                for (Eigen::Index i = 0; i < m; ++i) gl.bias(i) = fd[cursor++];
                break;
            case ModelKind::spnn:
                for (Eigen::Index i = 0; i < gl.a.size(); ++i) gl.a(i) = fd[cursor++];
                for (Eigen::Index i = 0; i < gl.b.size(); ++i) gl.b(i) = fd[cursor++];
                for (Eigen::Index i = 0; i < gl.c.size(); ++i) gl.c(i) = fd[cursor++];
                for (Eigen::Index i = 0; i < gl.bias.size(); ++i) gl.bias(i) = fd[cursor++];
                break;
        }
    }
    if (net.cfg.equivariant)
        for (auto& gl : grads.layers) equivariant_project(gl, net.cfg);
    return grads;
}

namespace {

struct AdamState {
    Gradients m;
    Gradients v;
    int step = 0;
};

void adam_init_like(Gradients& g, const Network& net) {
    g.layers.assign(net.layers.size(), {});
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        auto& gl = g.layers[l];
        gl.a = MatrixXd::Zero(layer.gen.a.rows(), layer.gen.a.cols());
        gl.b = MatrixXd::Zero(layer.gen.b.rows(), layer.gen.b.cols());
        gl.c = MatrixXd::Zero(layer.gen.c.rows(), layer.gen.c.cols());
        gl.dense = MatrixXd::Zero(layer.dense.rows(), layer.dense.cols());
        gl.bias = VectorXd::Zero(layer.bias.size());
    }
}

template <typename T>
void adam_block(T& param, const T& grad, T& m, T& v, double lr, double bc1, double bc2) {
    if (param.size() == 0 || grad.size() == 0) return;
    m = 0.9 * m + 0.1 * grad;
    v = (0.999 * v.array() + 0.001 * grad.array().square()).matrix();
    param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + 1e-8);
}

void adam_update(Network& net, const Gradients& grads, AdamState& state, double lr) {
    ++state.step;
    const double bc1 = 1.0 - std::pow(0.9, state.step);
    const double bc2 = 1.0 - std::pow(0.999, state.step);
    const int m = net.cfg.modes();
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        const auto& gl = grads.layers[l];
        auto& ml = state.m.layers[l];
        auto& vl = state.v.layers[l];
        switch (net.cfg.kind) {
            case ModelKind::bnn:
                adam_block(layer.dense, gl.dense, ml.dense, vl.dense, lr, bc1, bc2);
                adam_block(layer.bias, gl.bias, ml.bias, vl.bias, lr, bc1, bc2);
                break;
            case ModelKind::pnn: {
                adam_block(layer.gen.a, gl.a, ml.a, vl.a, lr, bc1, bc2);
                VectorXd bias_head = layer.bias.head(m);
                VectorXd grad_head = gl.bias.head(m);
                VectorXd m_head = ml.bias.head(m);
                VectorXd v_head = vl.bias.head(m);
                adam_block(bias_head, grad_head, m_head, v_head, lr, bc1, bc2);
                layer.bias.head(m) = bias_head;
                ml.bias.head(m) = m_head;
                vl.bias.head(m) = v_head;
                break;
            }
            case ModelKind::spnn:
                adam_block(layer.gen.a, gl.a, ml.a, vl.a, lr, bc1, bc2);
                adam_block(layer.gen.b, gl.b, ml.b, vl.b, lr, bc1, bc2);
                adam_block(layer.gen.c, gl.c, ml.c, vl.c, lr, bc1, bc2);
                adam_block(layer.bias, gl.bias, ml.bias, vl.bias, lr, bc1, bc2);
                break;
        }
    }
}

}  // namespace

double evaluate(const Network& net, const ClassificationData& data,
                std::uint64_t seed) {
    const NetConfig& cfg = net.cfg;
    const int dim = 2 * cfg.modes();
    const auto total = data.size();
    if (total == 0) return 0.0;
    int correct = 0;

    const int chunk = cfg.kind == ModelKind::bnn ? total : std::max(1, 20000 / cfg.n_samples);
    const auto mats = materialize_layers(net);
    const MatrixXd pool = pooling_operator(cfg);
    for (int begin = 0; begin < total; begin += chunk) {
        const int end = std::min(begin + chunk, total);
        const int count = end - begin;
        const MatrixXd means = data.means.middleCols(begin, count);
        MatrixXd eps;
        if (cfg.kind != ModelKind::bnn) {
            eps.resize(dim, static_cast<Eigen::Index>(count) * cfg.n_samples);
            for (int s = 0; s < count; ++s)
                eps.middleCols(static_cast<Eigen::Index>(s) * cfg.n_samples, cfg.n_samples) =
                    standard_normal(dim, cfg.n_samples, derive_seed(seed, begin + s));
        }
        const MatrixXd out =
            forward_core(net, means, data.shared, eps, nullptr, mats, pool);
        const auto n = cfg.kind == ModelKind::bnn ? 1 : static_cast<Eigen::Index>(cfg.n_samples);
        for (int s = 0; s < count; ++s) {
            const VectorXd logits = logits_from_output(out, cfg, s, n);
            int argmax = 0;
            logits.maxCoeff(&argmax);
            if (argmax == data.labels[begin + s]) ++correct;
        }
    }
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

VectorXd logits_for_series(const Network& net, const ClassificationData& data,
                           int series, std::uint64_t seed) {
    const int dim = 2 * net.cfg.modes();
    const MatrixXd eps =
        net.cfg.kind == ModelKind::bnn
            ? MatrixXd(dim, 0)
            : standard_normal(dim, net.cfg.n_samples, derive_seed(seed, series));
    GpPosterior post = data.shared;
    post.mean = data.means.col(series);
    return forward_with_eps(net, post, eps);
}

TrainResult train(Network& net, const ClassificationData& train_data,
                  const ClassificationData* test_data, const TrainOptions& opts) {
    const NetConfig& cfg = net.cfg;
    cfg.validate();
    if (train_data.size() == 0) throw std::invalid_argument("train: empty dataset");
    TrainResult result;
    if (opts.epochs == 0) return result;

    AdamState adam;
    adam_init_like(adam.m, net);
    adam_init_like(adam.v, net);

    const int total = train_data.size();
    const int batch = std::max(1, std::min(opts.batch_size, total));
    std::vector<int> order(total);
    std::iota(order.begin(), order.end(), 0);

    std::uint64_t step_index = 0;
    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        std::mt19937_64 shuffle_rng(derive_seed(opts.sampler_seed, 0x5u + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        int batches = 0;
        for (int begin = 0; begin < total; begin += batch) {
            const int end = std::min(begin + batch, total);
            const int count = end - begin;
            MatrixXd means(cfg.grid_size, count);
            std::vector<int> labels(count);
            for (int i = 0; i < count; ++i) {
                means.col(i) = train_data.means.col(order[begin + i]);
                labels[i] = train_data.labels[order[begin + i]];
            }
            MatrixXd eps;
            if (cfg.kind != ModelKind::bnn)
                eps = standard_normal(2 * cfg.modes(),
                                      static_cast<int>(count) * cfg.n_samples,
                                      derive_seed(opts.sampler_seed, 0x100000u + step_index));
            ++step_index;

            Gradients grads;
            double loss;
            if (opts.analytic_gradients) {
                loss = loss_and_gradient(net, means, labels, train_data.shared, eps, &grads);
            } else {
                loss = loss_and_gradient(net, means, labels, train_data.shared, eps, nullptr);
                grads = finite_difference_gradient(net, means, labels, train_data.shared,
                                                   eps, opts.fd_step);
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch));
            adam_update(net, grads, adam, opts.learning_rate);
            epoch_loss += loss;
            ++batches;
        }
        epoch_loss /= std::max(1, batches);

        const bool record = (opts.curve_every > 0 && epoch % opts.curve_every == 0) ||
                            epoch == opts.epochs;
        if (record) {
            CurveRow row;
            row.epoch = epoch;
            row.loss = epoch_loss;
            row.train_accuracy = evaluate(net, train_data, opts.eval_seed);
            row.test_accuracy =
                test_data ? evaluate(net, *test_data, opts.eval_seed)
                          : std::numeric_limits<double>::quiet_NaN();
            result.curve.push_back(row);
        }
    }
    return result;
}

}  // namespace gsnn
