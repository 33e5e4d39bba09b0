#include "gsnn/serialize.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gsnn {

using nlohmann::json;

namespace {

json matrix_to_rows(const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

MatrixXd rows_to_matrix(const json& rows) {
    if (!rows.is_array() || rows.empty())
        throw std::invalid_argument("json matrix: expected a non-empty array of rows");
    const auto nrows = rows.size();
    const auto ncols = rows[0].size();
    MatrixXd m(nrows, ncols);
    for (std::size_t r = 0; r < nrows; ++r) {
        if (rows[r].size() != ncols)
            throw std::invalid_argument("json matrix: ragged rows");
        for (std::size_t c = 0; c < ncols; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
}

json vector_to_json_array(const VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

VectorXd json_array_to_vector(const json& arr) {
    VectorXd v(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) v(i) = arr[i].get<double>();
    return v;
}

std::string kernel_family_name(KernelFamily family) {
    return family == KernelFamily::matern_half ? "matern_half" : "rbf";
}

KernelFamily kernel_family_from(const std::string& name) {
    if (name == "matern_half") return KernelFamily::matern_half;
    if (name == "rbf") return KernelFamily::rbf;
    throw std::invalid_argument("unknown kernel family: " + name);
}

}  // namespace

std::string state_to_json(const GaussianState& state) {
    json out;
    out["modes"] = state.modes();
    out["mean"] = vector_to_json_array(state.mean);
    json cov = json::array();
    for (Eigen::Index r = 0; r < state.cov.rows(); ++r)
        for (Eigen::Index c = 0; c < state.cov.cols(); ++c) cov.push_back(state.cov(r, c));
    out["cov"] = std::move(cov);
    return out.dump();
}

GaussianState state_from_json(const std::string& text) {
    const json in = json::parse(text);
    const int modes = in.at("modes").get<int>();
    VectorXd mean = json_array_to_vector(in.at("mean"));
    if (mean.size() != 2 * modes)
        throw std::invalid_argument("state json: mean length does not match modes");
    const auto& cov_arr = in.at("cov");
    if (cov_arr.size() != static_cast<std::size_t>(4 * modes * modes))
        throw std::invalid_argument("state json: covariance length does not match modes");
    MatrixXd cov(2 * modes, 2 * modes);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < 2 * modes; ++r)
        for (Eigen::Index c = 0; c < 2 * modes; ++c) cov(r, c) = cov_arr[i++].get<double>();
    return make_state(std::move(mean), std::move(cov));
}

std::string posterior_to_json(const GpPosterior& post) {
    json out;
    out["grid"] = post.grid;
    out["mean"] = vector_to_json_array(post.mean);
    out["cov"] = matrix_to_rows(post.cov);
    return out.dump();
}

std::string matrix_to_json(const MatrixXd& m) { return matrix_to_rows(m).dump(); }

MatrixXd matrix_from_json(const std::string& text) {
    return rows_to_matrix(json::parse(text));
}

VectorXd vector_from_json(const std::string& text) {
    const json arr = json::parse(text);
    if (!arr.is_array()) throw std::invalid_argument("json vector: expected an array");
    return json_array_to_vector(arr);
}

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json out;
    out["config"] = {{"layers", ckpt.config.layers},
                     {"channels", ckpt.config.channels},
                     {"grid_size", ckpt.config.grid_size},
                     {"beta", ckpt.config.beta},
                     {"n_samples", ckpt.config.n_samples},
                     {"kind", to_string(ckpt.config.kind)},
                     {"equivariant", ckpt.config.equivariant},
                     {"pooling", ckpt.config.pooling},
                     {"n_classes", ckpt.config.n_classes}};
    out["gp"] = {{"family", kernel_family_name(ckpt.kernel.family)},
                 {"lengthscale", ckpt.kernel.lengthscale},
                 {"variance", ckpt.kernel.variance},
                 {"noise_variance", ckpt.noise_variance}};
    out["seeds"] = {{"model", ckpt.model_seed}, {"sampler", ckpt.sampler_seed}};
    json layers = json::array();
    for (const auto& layer : ckpt.layers) {
        json l;
        if (ckpt.config.kind == ModelKind::bnn) {
            l["dense"] = matrix_to_rows(layer.dense);
        } else {
            l["a"] = matrix_to_rows(layer.gen.a);
            if (ckpt.config.kind == ModelKind::spnn) {
                l["b"] = matrix_to_rows(layer.gen.b);
                l["c"] = matrix_to_rows(layer.gen.c);
            }
        }
        l["bias"] = vector_to_json_array(layer.bias);
        layers.push_back(std::move(l));
    }
    out["layers"] = std::move(layers);
    return out.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    const json in = json::parse(text);
    Checkpoint ckpt;
    const auto& cfg = in.at("config");
    ckpt.config.layers = cfg.at("layers").get<int>();
    ckpt.config.channels = cfg.at("channels").get<int>();
    ckpt.config.grid_size = cfg.at("grid_size").get<int>();
    ckpt.config.beta = cfg.at("beta").get<double>();
    ckpt.config.n_samples = cfg.at("n_samples").get<int>();
    ckpt.config.kind = model_kind_from_string(cfg.at("kind").get<std::string>());
    ckpt.config.equivariant = cfg.at("equivariant").get<bool>();
    ckpt.config.pooling = cfg.at("pooling").get<bool>();
    ckpt.config.n_classes = cfg.at("n_classes").get<int>();
    const auto& gp = in.at("gp");
    ckpt.kernel.family = kernel_family_from(gp.at("family").get<std::string>());
    ckpt.kernel.lengthscale = gp.at("lengthscale").get<double>();
    ckpt.kernel.variance = gp.at("variance").get<double>();
    ckpt.noise_variance = gp.at("noise_variance").get<double>();
    ckpt.model_seed = in.at("seeds").at("model").get<std::uint64_t>();
    ckpt.sampler_seed = in.at("seeds").at("sampler").get<std::uint64_t>();

    const int m = ckpt.config.modes();
    for (const auto& l : in.at("layers")) {
        LayerParams layer;
        if (ckpt.config.kind == ModelKind::bnn) {
            layer.dense = rows_to_matrix(l.at("dense"));
        } else {
            layer.gen.a = rows_to_matrix(l.at("a"));
            if (ckpt.config.kind == ModelKind::spnn) {
                layer.gen.b = rows_to_matrix(l.at("b"));
                layer.gen.c = rows_to_matrix(l.at("c"));
            } else {
                layer.gen.b = MatrixXd::Zero(m, m);
                layer.gen.c = MatrixXd::Zero(m, m);
            }
        }
        layer.bias = json_array_to_vector(l.at("bias"));
        ckpt.layers.push_back(std::move(layer));
    }
    if (static_cast<int>(ckpt.layers.size()) != ckpt.config.layers)
        throw std::invalid_argument("checkpoint json: layer count mismatch");
    return ckpt;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << content;
}

}  // namespace gsnn
