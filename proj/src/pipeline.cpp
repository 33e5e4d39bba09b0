#include "gsnn/pipeline.hpp"

#include "gsnn/errors.hpp"
#include "gsnn/photonic.hpp"
#include "gsnn/serialize.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace gsnn {

void ExperimentConfig::validate() const {
    for (double f : fractions)
        if (!(f > 0.0) || f > 1.0)
            throw std::invalid_argument("config: fractions must be in (0, 1]");
    if (mask_seeds < 1) throw std::invalid_argument("config: mask_seeds must be >= 1");
    if (models.empty()) throw std::invalid_argument("config: no models selected");
    if (grid_size < 2) throw std::invalid_argument("config: grid_size must be >= 2");
}

ClassificationData build_classification_data(const std::vector<IrregularSeries>& series,
                                             const KernelSpec& spec, double noise_variance,
                                             const std::vector<double>& grid,
                                             SweepStats* stats) {
    if (series.empty())
        throw std::invalid_argument("build_classification_data: no series");
    for (const auto& s : series) {
        validate_series(s);
        if (s.locations != series.front().locations)
            throw std::invalid_argument(
                "build_classification_data: series must share one observation mask");
    }

    ClassificationData data;
    data.shared = gp_posterior(spec, series.front(), noise_variance, grid);
    if (stats) ++stats->kernel_factorizations;

    // One solve factor serves every series: only the mean depends on y.
    const auto& locs = series.front().locations;
    MatrixXd a = kernel_matrix(spec, locs, locs);
    a.diagonal().array() += noise_variance;
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw FactorizationError("build_classification_data: observation matrix singular", -1);
    const MatrixXd k_cross = kernel_matrix(spec, grid, locs);
    const MatrixXd projector = k_cross * llt.solve(MatrixXd::Identity(a.rows(), a.cols()));

    data.means.resize(grid.size(), series.size());
    data.labels.resize(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        const VectorXd y = Eigen::Map<const VectorXd>(
            series[i].values.data(), static_cast<Eigen::Index>(series[i].values.size()));
        data.means.col(i) = projector * y;
        data.labels[i] = series[i].label;
        if (stats) ++stats->posterior_means;
    }
    return data;
}

namespace {

int count_labels(const std::vector<IrregularSeries>& series) {
    std::set<int> labels;
    for (const auto& s : series) labels.insert(s.label);
    return static_cast<int>(labels.size());
}

struct CellData {
    ClassificationData train;
    ClassificationData test;
};

// Masks, GP fit and posterior factors of one (fraction, seed) cell. The GP
// stage is computed once and shared by every model kind.
CellData build_cell(const ExperimentConfig& cfg,
                    const std::vector<IrregularSeries>& train_full,
                    const std::vector<IrregularSeries>& test_full, double fraction,
                    std::uint64_t cell_tag, SweepStats* stats) {
    const auto mask_train =
        subsample_mask(cfg.grid_size, fraction, derive_seed(cfg.seed_mask_train, cell_tag));
    const auto mask_test =
        subsample_mask(cfg.grid_size, fraction, derive_seed(cfg.seed_mask_test, cell_tag));

    std::vector<IrregularSeries> train_series, test_series;
    train_series.reserve(train_full.size());
    test_series.reserve(test_full.size());
    for (const auto& s : train_full) train_series.push_back(subsample(s, mask_train));
    for (const auto& s : test_full) test_series.push_back(subsample(s, mask_test));

    const auto grid = uniform_grid(cfg.grid_size);
    const KernelSpec fitted =
        fit_gp(train_series, cfg.gp_init, cfg.noise_variance,
               {cfg.gp_epochs, cfg.gp_rate, cfg.gp_batch, true, 1e-5});
    CellData cell;
    cell.train =
        build_classification_data(train_series, fitted, cfg.noise_variance, grid, stats);
    cell.test =
        build_classification_data(test_series, fitted, cfg.noise_variance, grid, stats);
    return cell;
}

double train_and_score(const ExperimentConfig& cfg, const CellData& cell, ModelKind kind,
                       int n_classes, std::uint64_t cell_tag) {
    NetConfig net_cfg;
    net_cfg.layers = cfg.net_layers;
    net_cfg.channels = cfg.net_channels;
    net_cfg.grid_size = cfg.grid_size;
    net_cfg.beta = cfg.net_beta;
    net_cfg.n_samples = cfg.net_samples;
    net_cfg.kind = kind;
    net_cfg.equivariant = cfg.net_equivariant;
    net_cfg.pooling = cfg.net_pooling;
    net_cfg.n_classes = n_classes;

    const std::uint64_t model_tag = cell_tag * 10 + static_cast<std::uint64_t>(kind);
    Network net = init_network(net_cfg, derive_seed(cfg.seed_model, model_tag));
    TrainOptions opts;
    opts.epochs = cfg.train_epochs;
    opts.learning_rate = cfg.train_rate;
    opts.batch_size = cfg.train_batch;
    opts.sampler_seed = derive_seed(cfg.seed_sampler, model_tag);
    opts.curve_every = 0;
    train(net, cell.train, nullptr, opts);
    return evaluate(net, cell.test, opts.eval_seed);
}

}  // namespace

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg, const std::string& out_csv,
                                 SweepStats* stats) {
    cfg.validate();

    std::vector<IrregularSeries> train_full, test_full;
    if (cfg.dataset == "synthetic_control") {
        train_full =
            generate_synthetic_control(cfg.n_per_class, cfg.grid_size, cfg.seed_data_train);
        test_full =
            generate_synthetic_control(cfg.n_per_class, cfg.grid_size, cfg.seed_data_test);
    } else {
        train_full = read_series_csv(cfg.dataset);
        test_full = read_series_csv(cfg.dataset_test);
        for (const auto& s : train_full)
            if (static_cast<int>(s.locations.size()) != cfg.grid_size)
                throw std::invalid_argument("run_sweep: series length != grid_size");
    }
    const int n_classes = count_labels(train_full);

    std::vector<ResultRow> rows;
    for (double fraction : cfg.fractions) {
        // All masks coincide at fraction 1; one cell carries the statistics.
        const int n_seeds = fraction >= 1.0 ? 1 : cfg.mask_seeds;
        std::map<ModelKind, std::vector<double>> accuracies;
        std::map<ModelKind, bool> failed;
        for (ModelKind kind : cfg.models) failed[kind] = false;

        for (int seed_index = 0; seed_index < n_seeds; ++seed_index) {
            const std::uint64_t cell_tag =
                static_cast<std::uint64_t>(seed_index) * 1000 +
                static_cast<std::uint64_t>(fraction * 100.0);
            bool have_cell = true;
            CellData cell;
            try {
                cell = build_cell(cfg, train_full, test_full, fraction, cell_tag, stats);
            } catch (const std::exception&) {
                have_cell = false;
            }
            for (ModelKind kind : cfg.models) {
                if (!have_cell) {
                    failed[kind] = true;
                    continue;
                }
                try {
                    accuracies[kind].push_back(
                        train_and_score(cfg, cell, kind, n_classes, cell_tag));
                } catch (const std::exception&) {
                    failed[kind] = true;
                }
            }
        }

        for (ModelKind kind : cfg.models) {
            ResultRow row;
            row.model = to_string(kind);
            row.fraction = fraction;
            row.n_seeds = n_seeds;
            row.failed = failed[kind];
            if (!row.failed) {
                const auto& accs = accuracies[kind];
                double mean = 0.0;
                for (double a : accs) mean += a;
                mean /= accs.size();
                double var = 0.0;
                for (double a : accs) var += (a - mean) * (a - mean);
                row.mean = mean;
                row.stddev = std::sqrt(var / accs.size());
            } else {
                row.mean = std::numeric_limits<double>::quiet_NaN();
                row.stddev = std::numeric_limits<double>::quiet_NaN();
            }
            rows.push_back(row);
        }
    }

    if (!out_csv.empty()) write_file(out_csv, results_to_csv(rows));
    return rows;
}

std::string results_to_csv(const std::vector<ResultRow>& rows) {
    std::string out = "model,fraction,mean,std\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g\n", r.model.c_str(),
                      r.fraction, r.mean, r.stddev);
        out += buf;
    }
    return out;
}

std::string sigma_curve_csv(int k, const std::vector<int>& m_list, double x_min,
                            double x_max, int points) {
    if (points < 2) throw std::invalid_argument("sigma_curve_csv: points must be >= 2");
    std::string header = "x,softplus";
    for (int m : m_list) header += ",sigma_m" + std::to_string(m);
    std::string out = header + "\n";
    char buf[64];
    for (int i = 0; i < points; ++i) {
        const double x = x_min + (x_max - x_min) * i / (points - 1);
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", x, softplus(x, 1.0));
        out += buf;
        for (int m : m_list) {
            out += ",";
            try {
                const double v = truncated_sigma(k, 1.0 / (2.0 * m), m, x);
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out += buf;
            } catch (const FlowDomainError&) {
                // blank cell
            }
        }
        out += "\n";
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

}  // namespace

ExperimentConfig config_from_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) continue;

        if (key == "dataset") cfg.dataset = value;
        else if (key == "dataset_test") cfg.dataset_test = value;
        else if (key == "n_per_class") cfg.n_per_class = std::stoi(value);
        else if (key == "grid_size") cfg.grid_size = std::stoi(value);
        else if (key == "fractions") {
            cfg.fractions.clear();
            for (const auto& f : split(value, ',')) cfg.fractions.push_back(std::stod(f));
        } else if (key == "mask_seeds") cfg.mask_seeds = std::stoi(value);
        else if (key == "seed_data_train") cfg.seed_data_train = std::stoull(value);
        else if (key == "seed_data_test") cfg.seed_data_test = std::stoull(value);
        else if (key == "seed_mask_train") cfg.seed_mask_train = std::stoull(value);
        else if (key == "seed_mask_test") cfg.seed_mask_test = std::stoull(value);
        else if (key == "seed_model") cfg.seed_model = std::stoull(value);
        else if (key == "seed_sampler") cfg.seed_sampler = std::stoull(value);
        else if (key == "gp_family")
            cfg.gp_init.family =
                value == "rbf" ? KernelFamily::rbf : KernelFamily::matern_half;
        else if (key == "gp_lengthscale") cfg.gp_init.lengthscale = std::stod(value);
        else if (key == "gp_variance") cfg.gp_init.variance = std::stod(value);
        else if (key == "gp_noise") cfg.noise_variance = std::stod(value);
        else if (key == "gp_epochs") cfg.gp_epochs = std::stoi(value);
        else if (key == "gp_rate") cfg.gp_rate = std::stod(value);
        else if (key == "gp_batch") cfg.gp_batch = std::stoi(value);
        else if (key == "net_layers") cfg.net_layers = std::stoi(value);
        else if (key == "net_channels") cfg.net_channels = std::stoi(value);
        else if (key == "net_beta") cfg.net_beta = std::stod(value);
        else if (key == "net_samples") cfg.net_samples = std::stoi(value);
        else if (key == "net_pooling") cfg.net_pooling = value == "true" || value == "1";
        else if (key == "net_equivariant")
            cfg.net_equivariant = value == "true" || value == "1";
        else if (key == "models") {
            cfg.models.clear();
            for (const auto& mname : split(value, ','))
                cfg.models.push_back(model_kind_from_string(mname));
        } else if (key == "train_epochs") cfg.train_epochs = std::stoi(value);
        else if (key == "train_rate") cfg.train_rate = std::stod(value);
        else if (key == "train_batch") cfg.train_batch = std::stoi(value);
        else throw std::invalid_argument("config: unknown key " + key);
    }
    return cfg;
}

std::string config_to_text(const ExperimentConfig& cfg) {
    std::ostringstream out;
    char buf[64];
    out << "dataset = " << cfg.dataset << "\n";
    if (!cfg.dataset_test.empty()) out << "dataset_test = " << cfg.dataset_test << "\n";
    out << "n_per_class = " << cfg.n_per_class << "\n";
    out << "grid_size = " << cfg.grid_size << "\n";
    out << "fractions = ";
    for (std::size_t i = 0; i < cfg.fractions.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%g", cfg.fractions[i]);
        out << (i ? "," : "") << buf;
    }
    out << "\n";
    out << "mask_seeds = " << cfg.mask_seeds << "\n";
    out << "seed_data_train = " << cfg.seed_data_train << "\n";
    out << "seed_data_test = " << cfg.seed_data_test << "\n";
    out << "seed_mask_train = " << cfg.seed_mask_train << "\n";
    out << "seed_mask_test = " << cfg.seed_mask_test << "\n";
    out << "seed_model = " << cfg.seed_model << "\n";
    out << "seed_sampler = " << cfg.seed_sampler << "\n";
    out << "gp_family = "
        << (cfg.gp_init.family == KernelFamily::rbf ? "rbf" : "matern_half") << "\n";
    out << "gp_lengthscale = " << cfg.gp_init.lengthscale << "\n";
    out << "gp_variance = " << cfg.gp_init.variance << "\n";
    out << "gp_noise = " << cfg.noise_variance << "\n";
    out << "gp_epochs = " << cfg.gp_epochs << "\n";
    out << "gp_rate = " << cfg.gp_rate << "\n";
    out << "gp_batch = " << cfg.gp_batch << "\n";
    out << "net_layers = " << cfg.net_layers << "\n";
    out << "net_channels = " << cfg.net_channels << "\n";
    out << "net_beta = " << cfg.net_beta << "\n";
    out << "net_samples = " << cfg.net_samples << "\n";
    out << "net_pooling = " << (cfg.net_pooling ? "true" : "false") << "\n";
    out << "net_equivariant = " << (cfg.net_equivariant ? "true" : "false") << "\n";
    out << "models = ";
    for (std::size_t i = 0; i < cfg.models.size(); ++i)
        out << (i ? "," : "") << to_string(cfg.models[i]);
    out << "\n";
    out << "train_epochs = " << cfg.train_epochs << "\n";
    out << "train_rate = " << cfg.train_rate << "\n";
    out << "train_batch = " << cfg.train_batch << "\n";
    return out.str();
}

}  // namespace gsnn
