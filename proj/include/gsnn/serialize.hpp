#pragma once

#include "gsnn/gaussian.hpp"
#include "gsnn/gp.hpp"
#include "gsnn/net.hpp"

#include <string>

namespace gsnn {

// Gaussian state <-> {"modes", "mean", "cov" (row-major)}.
std::string state_to_json(const GaussianState& state);
GaussianState state_from_json(const std::string& text);

// Posterior export: {"grid", "mean", "cov" (nested rows)}.
std::string posterior_to_json(const GpPosterior& post);

std::string matrix_to_json(const MatrixXd& m);
MatrixXd matrix_from_json(const std::string& text);
VectorXd vector_from_json(const std::string& text);

// Model checkpoint: config, kernel, noise, layer parameters, seeds.
struct Checkpoint {
    NetConfig config;
    std::vector<LayerParams> layers;
    KernelSpec kernel;
    double noise_variance = 1e-2;
    std::uint64_t model_seed = 0;
    std::uint64_t sampler_seed = 0;
};

std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace gsnn
