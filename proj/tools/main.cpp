// Command-line front end: dataset generation, GP pretraining, model
// training/evaluation, experiment sweeps, and the photonic compiler.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include "gsnn/errors.hpp"
#include "gsnn/pipeline.hpp"
#include "gsnn/photonic.hpp"
#include "gsnn/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <random>

namespace {

using namespace gsnn;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::vector<IrregularSeries> load_and_mask(const std::string& path, double fraction,
                                           std::uint64_t mask_seed) {
    auto series = read_series_csv(path);
    if (fraction >= 1.0) return series;
    if (series.empty()) throw std::invalid_argument("no series in " + path);
    const auto mask =
        subsample_mask(static_cast<int>(series.front().locations.size()), fraction, mask_seed);
    for (auto& s : series) s = subsample(s, mask);
    return series;
}

int count_classes(const std::vector<IrregularSeries>& series) {
    int max_label = -1;
    for (const auto& s : series) max_label = std::max(max_label, s.label);
    if (max_label < 0) throw std::invalid_argument("series carry no labels");
    return max_label + 1;
}

std::string curve_to_csv(const TrainResult& result) {
    std::string out = "epoch,loss,train_acc,test_acc\n";
    char buf[128];
    for (const auto& row : result.curve) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", row.epoch, row.loss,
                      row.train_accuracy, row.test_accuracy);
        out += buf;
    }
    return out;
}

int cmd_gen_data(const std::string& out_dir, int n_per_class, int length,
                 std::uint64_t seed_train, std::uint64_t seed_test) {
    write_series_csv(out_dir + "/train.csv",
                     generate_synthetic_control(n_per_class, length, seed_train));
    write_series_csv(out_dir + "/test.csv",
                     generate_synthetic_control(n_per_class, length, seed_test));
    std::printf("wrote %d train and %d test series of length %d to %s\n", 6 * n_per_class,
                6 * n_per_class, length, out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-state symplectic networks and their photonic compiler"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic control dataset");
    std::string gen_out = ".";
    int gen_n = 50, gen_len = 60;
    std::uint64_t gen_seed_train = 7, gen_seed_test = 8;
    gen->add_option("--out-dir", gen_out);
    gen->add_option("--n-per-class", gen_n);
    gen->add_option("--length", gen_len);
    gen->add_option("--seed-train", gen_seed_train);
    gen->add_option("--seed-test", gen_seed_test);

    // gp-fit
    auto* gpfit = app.add_subcommand("gp-fit", "Fit kernel hyperparameters");
    std::string gp_data, gp_out;
    double gp_ell = 0.2, gp_var = 1.0, gp_noise = 1e-2, gp_rate = 0.1, gp_fraction = 1.0;
    int gp_epochs = 20, gp_batch = 50;
    std::uint64_t gp_mask_seed = 11;
    std::string gp_family = "matern_half";
    gpfit->add_option("--data", gp_data)->required();
    gpfit->add_option("--out", gp_out);
    gpfit->add_option("--family", gp_family);
    gpfit->add_option("--lengthscale", gp_ell);
    gpfit->add_option("--variance", gp_var);
    gpfit->add_option("--noise", gp_noise);
    gpfit->add_option("--epochs", gp_epochs);
    gpfit->add_option("--rate", gp_rate);
    gpfit->add_option("--batch", gp_batch);
    gpfit->add_option("--fraction", gp_fraction);
    gpfit->add_option("--mask-seed", gp_mask_seed);

    // train
    auto* tr = app.add_subcommand("train", "Train one model");
    std::string tr_data, tr_test, tr_model = "spnn", tr_out = "checkpoint.json", tr_curve;
    double tr_fraction = 1.0, tr_lr = 1e-3, tr_beta = 0.1;
    double tr_ell = 0.2, tr_var = 1.0, tr_noise = 1e-2;
    int tr_epochs = 1000, tr_batch = 50, tr_channels = 2, tr_layers = 3, tr_samples = 100;
    int tr_curve_every = 10, tr_gp_epochs = 20;
    bool tr_pooling = false, tr_equivariant = false;
    std::uint64_t tr_mask_train = 11, tr_mask_test = 22, tr_seed_model = 33,
                  tr_seed_sampler = 44;
    tr->add_option("--data", tr_data)->required();
    tr->add_option("--test", tr_test);
    tr->add_option("--model", tr_model);
    tr->add_option("--fraction", tr_fraction);
    tr->add_option("--mask-seed-train", tr_mask_train);
    tr->add_option("--mask-seed-test", tr_mask_test);
    tr->add_option("--seed-model", tr_seed_model);
    tr->add_option("--seed-sampler", tr_seed_sampler);
    tr->add_option("--epochs", tr_epochs);
    tr->add_option("--lr", tr_lr);
    tr->add_option("--batch", tr_batch);
    tr->add_option("--channels", tr_channels);
    tr->add_option("--layers", tr_layers);
    tr->add_option("--n-samples", tr_samples);
    tr->add_option("--beta", tr_beta);
    tr->add_flag("--pooling", tr_pooling);
    tr->add_flag("--equivariant", tr_equivariant);
    tr->add_option("--gp-lengthscale", tr_ell);
    tr->add_option("--gp-variance", tr_var);
    tr->add_option("--gp-noise", tr_noise);
    tr->add_option("--gp-epochs", tr_gp_epochs);
    tr->add_option("--out", tr_out);
    tr->add_option("--curve", tr_curve);
    tr->add_option("--curve-every", tr_curve_every);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    std::string ev_ckpt, ev_data;
    double ev_fraction = 1.0;
    std::uint64_t ev_mask_seed = 22, ev_eval_seed = 1;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--fraction", ev_fraction);
    ev->add_option("--mask-seed", ev_mask_seed);
    ev->add_option("--eval-seed", ev_eval_seed);

    // sweep
    auto* sw = app.add_subcommand("sweep", "Run the full experiment sweep");
    std::string sw_config, sw_out = "results.csv";
    sw->add_option("--config", sw_config);
    sw->add_option("--out", sw_out);

    // emit-sigma-curve
    auto* sc = app.add_subcommand("emit-sigma-curve",
                                  "Tabulate the truncated nonlinearity against softplus");
    int sc_k = 3, sc_points = 81;
    double sc_xmin = -1.0, sc_xmax = 3.0;
    std::vector<int> sc_ms = {1, 2, 4, 8, 16};
    std::string sc_out = "sigma.csv";
    sc->add_option("--k", sc_k);
    sc->add_option("--m-list", sc_ms)->delimiter(',');
    sc->add_option("--x-min", sc_xmin);
    sc->add_option("--x-max", sc_xmax);
    sc->add_option("--points", sc_points);
    sc->add_option("--out", sc_out);

    // compile-linear
    auto* cl = app.add_subcommand("compile-linear",
                                  "Lower a symplectic layer to a photonic program");
    std::string cl_matrix, cl_bias, cl_out = "program.txt";
    int cl_random_modes = 0;
    std::uint64_t cl_seed = 1;
    cl->add_option("--matrix", cl_matrix);
    cl->add_option("--bias", cl_bias);
    cl->add_option("--random-modes", cl_random_modes,
                   "Compile a random generator layer of this many modes instead");
    cl->add_option("--seed", cl_seed);
    cl->add_option("--out", cl_out);

    // compile-nonlinearity
    auto* cn = app.add_subcommand("compile-nonlinearity",
                                  "Emit the Trotterized softplus gadget program");
    int cn_k = 1, cn_m = 1;
    double cn_eps = 0.5, cn_beta = 1.0;
    std::string cn_out = "program.txt";
    cn->add_option("--k", cn_k);
    cn->add_option("--eps", cn_eps);
    cn->add_option("--m", cn_m);
    cn->add_option("--beta", cn_beta);
    cn->add_option("--out", cn_out);

    // verify-program
    auto* vp = app.add_subcommand("verify-program",
                                  "Re-run the Gaussian simulation check on a program");
    std::string vp_program, vp_matrix, vp_bias, vp_state;
    vp->add_option("--program", vp_program)->required();
    vp->add_option("--matrix", vp_matrix);
    vp->add_option("--bias", vp_bias);
    vp->add_option("--state", vp_state);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) return cmd_gen_data(gen_out, gen_n, gen_len, gen_seed_train, gen_seed_test);

        if (*gpfit) {
            auto series = load_and_mask(gp_data, gp_fraction, gp_mask_seed);
            KernelSpec init{gp_family == "rbf" ? KernelFamily::rbf : KernelFamily::matern_half,
                            gp_ell, gp_var};
            const double before = mean_log_marginal_likelihood(init, series, gp_noise);
            const KernelSpec fitted =
                fit_gp(series, init, gp_noise, {gp_epochs, gp_rate, gp_batch, true, 1e-5});
            const double after = mean_log_marginal_likelihood(fitted, series, gp_noise);
            std::printf("lml %.6f -> %.6f  lengthscale %.6g  variance %.6g\n", before, after,
                        fitted.lengthscale, fitted.variance);
            if (!gp_out.empty()) {
                char buf[256];
                std::snprintf(buf, sizeof(buf),
                              "{\"family\": \"%s\", \"lengthscale\": %.17g, \"variance\": "
                              "%.17g, \"noise_variance\": %.17g}\n",
                              gp_family.c_str(), fitted.lengthscale, fitted.variance,
                              gp_noise);
                write_file(gp_out, buf);
            }
            return 0;
        }

        if (*tr) {
            auto full_series = read_series_csv(tr_data);
            if (full_series.empty()) throw std::invalid_argument("no series in " + tr_data);
            const int grid_size = static_cast<int>(full_series.front().locations.size());
            std::vector<IrregularSeries> train_series;
            if (tr_fraction >= 1.0) {
                train_series = std::move(full_series);
            } else {
                const auto mask = subsample_mask(grid_size, tr_fraction, tr_mask_train);
                for (const auto& s : full_series) train_series.push_back(subsample(s, mask));
            }
            const int n_classes = count_classes(train_series);
            const auto grid = uniform_grid(grid_size);

            KernelSpec init{KernelFamily::matern_half, tr_ell, tr_var};
            const KernelSpec fitted =
                fit_gp(train_series, init, tr_noise, {tr_gp_epochs, 0.1, 50, true, 1e-5});
            const ClassificationData train_data =
                build_classification_data(train_series, fitted, tr_noise, grid);

            ClassificationData test_data;
            const bool have_test = !tr_test.empty();
            if (have_test)
                test_data = build_classification_data(
                    load_and_mask(tr_test, tr_fraction, tr_mask_test), fitted, tr_noise, grid);

            NetConfig cfg;
            cfg.layers = tr_layers;
            cfg.channels = tr_channels;
            cfg.grid_size = grid_size;
            cfg.beta = tr_beta;
            cfg.n_samples = tr_samples;
            cfg.kind = model_kind_from_string(tr_model);
            cfg.equivariant = tr_equivariant;
            cfg.pooling = tr_pooling;
            cfg.n_classes = n_classes;

            Network net = init_network(cfg, tr_seed_model);
            TrainOptions opts;
            opts.epochs = tr_epochs;
            opts.learning_rate = tr_lr;
            opts.batch_size = tr_batch;
            opts.sampler_seed = tr_seed_sampler;
            opts.curve_every = tr_curve_every;
            const TrainResult result =
                train(net, train_data, have_test ? &test_data : nullptr, opts);

            Checkpoint ckpt{cfg, net.layers, fitted, tr_noise, tr_seed_model, tr_seed_sampler};
            write_file(tr_out, checkpoint_to_json(ckpt));
            if (!tr_curve.empty()) write_file(tr_curve, curve_to_csv(result));
            if (!result.curve.empty()) {
                const auto& last = result.curve.back();
                std::printf("epoch %d  loss %.5f  train_acc %.2f  test_acc %.2f\n", last.epoch,
                            last.loss, last.train_accuracy, last.test_accuracy);
            }
            return 0;
        }

        if (*ev) {
            const Checkpoint ckpt = checkpoint_from_json(read_file(ev_ckpt));
            auto series = load_and_mask(ev_data, ev_fraction, ev_mask_seed);
            const auto grid = uniform_grid(ckpt.config.grid_size);
            const ClassificationData data = build_classification_data(
                series, ckpt.kernel, ckpt.noise_variance, grid);
            Network net{ckpt.config, ckpt.layers};
            std::printf("accuracy %.4f\n", evaluate(net, data, ev_eval_seed));
            return 0;
        }

        if (*sw) {
            ExperimentConfig cfg;
            if (!sw_config.empty()) cfg = config_from_text(read_file(sw_config));
            SweepStats stats;
            const auto rows = run_sweep(cfg, sw_out, &stats);
            write_file(sw_out + ".config", config_to_text(cfg));
            for (const auto& r : rows)
                std::printf("%-5s f=%.2f  %.2f +- %.2f (%d seeds)%s\n", r.model.c_str(),
                            r.fraction, r.mean, r.stddev, r.n_seeds,
                            r.failed ? "  FAILED" : "");
            std::printf("kernel factorizations: %d, posterior means: %d\n",
                        stats.kernel_factorizations, stats.posterior_means);
            return 0;
        }

        if (*sc) {
            write_file(sc_out, sigma_curve_csv(sc_k, sc_ms, sc_xmin, sc_xmax, sc_points));
            std::printf("wrote %s\n", sc_out.c_str());
            return 0;
        }

        if (*cl) {
            MatrixXd s;
            VectorXd xi;
            if (cl_random_modes > 0) {
                std::mt19937_64 rng(cl_seed);
                std::uniform_real_distribution<double> uniform(-0.3, 0.3);
                const int m = cl_random_modes;
                BlockGenerator gen{MatrixXd(m, m), MatrixXd(m, m), MatrixXd(m, m)};
                for (auto* block : {&gen.a, &gen.b, &gen.c})
                    for (Eigen::Index i = 0; i < block->size(); ++i)
                        (*block)(i) = uniform(rng);
                s = symplectic_from_generator(gen);
                xi = VectorXd::Zero(2 * m);
                for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = uniform(rng);
            } else {
                if (cl_matrix.empty())
                    throw std::invalid_argument("compile-linear: need --matrix or --random-modes");
                s = matrix_from_json(read_file(cl_matrix));
                xi = cl_bias.empty() ? VectorXd::Zero(s.rows())
                                     : vector_from_json(read_file(cl_bias));
            }
            const GateProgram program = compile_linear(s, xi);
            write_file(cl_out, serialize_program(program));
            std::printf("wrote %zu gates for %d modes to %s\n", program.gates.size(),
                        program.modes, cl_out.c_str());
            return 0;
        }

        if (*cn) {
            const GateProgram program = compile_nonlinearity(cn_k, cn_eps, cn_m, cn_beta);
            write_file(cn_out, serialize_program(program));
            std::printf("wrote %zu gates (expected %lld) to %s\n", program.gates.size(),
                        gate_count(cn_k, cn_m), cn_out.c_str());
            return 0;
        }

        if (*vp) {
            const GateProgram program = parse_program(read_file(vp_program));
            std::printf("modes %d, gates %zu\n", program.modes, program.gates.size());
            if (program.source == GateProgram::Source::nonlinear) {
                const long long expected = gate_count(program.trunc_k, program.reps);
                std::printf("gate count %zu, expected %lld (k=%d, m=%d)%s\n",
                            program.gates.size(), expected, program.trunc_k, program.reps,
                            static_cast<long long>(program.gates.size()) == expected
                                ? ""
                                : "  MISMATCH");
            }
            const GaussianState input = vp_state.empty()
                                            ? vacuum(program.modes)
                                            : state_from_json(read_file(vp_state));
            const GaussianState simulated = simulate_gaussian(program, input);
            if (!vp_matrix.empty()) {
                const MatrixXd s = matrix_from_json(read_file(vp_matrix));
                const VectorXd xi = vp_bias.empty() ? VectorXd::Zero(s.rows())
                                                    : vector_from_json(read_file(vp_bias));
                const GaussianState direct = displace(apply_symplectic(input, s, 1e-6), xi);
                const double residual =
                    std::max((simulated.mean - direct.mean).cwiseAbs().maxCoeff(),
                             (simulated.cov - direct.cov).cwiseAbs().maxCoeff());
                std::printf("residual %.3e\n", residual);
                if (residual > 1e-6) {
                    std::fprintf(stderr, "verify-program: residual above 1e-6\n");
                    return kExitNumerical;
                }
            } else {
                std::printf("simulated mean norm %.6g, det(C) %.6g\n",
                            simulated.mean.norm(), det_cov(simulated));
            }
            return 0;
        }
    } catch (const UnsupportedGateError& e) {
        std::fprintf(stderr, "unsupported gate: %s\n", e.what());
        return kExitNumerical;
    } catch (const FactorizationError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const FlowDomainError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    }
    return 0;
}
