#pragma once

// Experiment pipeline: dataset generation or ingestion, mask subsampling,
// shared GP pretraining, model training/evaluation sweeps, and CSV emission.

#include "gsnn/dataset.hpp"
#include "gsnn/net.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gsnn {

struct ExperimentConfig {
    std::string dataset = "synthetic_control";  // or a train CSV path
    std::string dataset_test;                   // test CSV path when dataset is a path
    int n_per_class = 50;
    int grid_size = 60;
    std::vector<double> fractions = {1.0};
    int mask_seeds = 3;

    std::uint64_t seed_data_train = 7;
    std::uint64_t seed_data_test = 8;
    std::uint64_t seed_mask_train = 11;
    std::uint64_t seed_mask_test = 22;
    std::uint64_t seed_model = 33;
    std::uint64_t seed_sampler = 44;

    KernelSpec gp_init;
    double noise_variance = 1e-2;
    int gp_epochs = 20;
    double gp_rate = 0.1;
    int gp_batch = 50;

    int net_layers = 3;
    int net_channels = 2;
    double net_beta = 0.1;
    int net_samples = 100;
    bool net_pooling = false;
    bool net_equivariant = false;

    std::vector<ModelKind> models = {ModelKind::bnn, ModelKind::pnn, ModelKind::spnn};
    int train_epochs = 80;
    double train_rate = 3e-3;
    int train_batch = 50;

    void validate() const;
};

struct ResultRow {
    std::string model;
    double fraction;
    double mean;
    double stddev;
    int n_seeds;
    bool failed = false;
};

struct SweepStats {
    int kernel_factorizations = 0;  // posterior covariance factorizations
    int posterior_means = 0;        // per-series posterior means computed
};

// Posterior means of many series sharing one observation mask: the kernel
// system is factored once and reused for every series.
ClassificationData build_classification_data(const std::vector<IrregularSeries>& series,
                                             const KernelSpec& spec, double noise_variance,
                                             const std::vector<double>& grid,
                                             SweepStats* stats = nullptr);

std::vector<ResultRow> run_sweep(const ExperimentConfig& config,
                                 const std::string& out_csv, SweepStats* stats = nullptr);

std::string results_to_csv(const std::vector<ResultRow>& rows);

// CSV with columns x, softplus and one sigma column per repetition count,
// eps = 1/(2m); domain-error cells are left empty.
std::string sigma_curve_csv(int k, const std::vector<int>& m_list, double x_min,
                            double x_max, int points);

// Flat key=value config file.
ExperimentConfig config_from_text(const std::string& text);
std::string config_to_text(const ExperimentConfig& config);

}  // namespace gsnn
