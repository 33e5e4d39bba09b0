#include "gsnn/photonic.hpp"

#include "gsnn/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace gsnn {

std::string to_string(GateKind kind) {
    switch (kind) {
        case GateKind::rotation2: return "ROTATION2";
        case GateKind::phase: return "PHASE";
        case GateKind::squeeze: return "SQUEEZE";
        case GateKind::displace: return "DISPLACE";
        case GateKind::momentum_shift: return "MOMENTUM_SHIFT";
        case GateKind::momentum_square: return "MOMENTUM_SQUARE";
        case GateKind::cubic_phase: return "CUBIC_PHASE";
    }
    return "?";
}

MatrixXd BlochMessiah::sigma() const {
    const auto m = r.size();
    VectorXd diag(2 * m);
    diag.head(m) = r.array().exp();
    diag.tail(m) = (-r.array()).exp();
    return diag.asDiagonal();
}

BlochMessiah bloch_messiah(const MatrixXd& s, double tol) {
    const auto check = is_symplectic(s, tol);
    if (!check.ok)
        throw std::invalid_argument("bloch_messiah: input not symplectic (residual " +
                                    std::to_string(check.residual) + ")");
    const auto m = s.rows() / 2;
    const MatrixXd j = symplectic_form(static_cast<int>(m));

    // S S^T is symmetric positive definite and symplectic; its logarithm is a
    // symmetric Hamiltonian whose eigenvalues come in +/- pairs with J mapping
    // one eigenspace onto the other.
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s * s.transpose());
    if (eig.info() != Eigen::Success)
        throw std::runtime_error("bloch_messiah: eigensolver failed");

    struct Pair {
        double r;
        VectorXd v;
    };
    std::vector<Pair> positive;
    std::vector<VectorXd> near_zero;
    const double thresh = 1e-10;
    for (Eigen::Index i = 0; i < 2 * m; ++i) {
        const double r = 0.5 * std::log(eig.eigenvalues()(i));
        if (r > thresh)
            positive.push_back({r, eig.eigenvectors().col(i)});
        else if (r >= -thresh)
            near_zero.push_back(eig.eigenvectors().col(i));
    }
    std::sort(positive.begin(), positive.end(),
              [](const Pair& a, const Pair& b) { return a.r > b.r; });

    MatrixXd k(2 * m, 2 * m);
    VectorXd r = VectorXd::Zero(m);
    Eigen::Index col = 0;
    for (const auto& p : positive) {
        r(col) = p.r;
        k.col(col) = p.v;
        k.col(m + col) = -j * p.v;
        ++col;
    }

    // Zero-squeezing subspace: J-invariant, so build a symplectically paired
    // orthonormal basis by Gram-Schmidt over (u, -J u) pairs.
    std::vector<VectorXd> accepted;
    for (Eigen::Index i = 0; i < col; ++i) {
        accepted.push_back(k.col(i));
        accepted.push_back(k.col(m + i));
    }
    while (col < m) {
        VectorXd u;
        double best = -1.0;
        for (const auto& cand : near_zero) {
            VectorXd w = cand;
            for (const auto& a : accepted) w -= a.dot(w) * a;
            if (w.norm() > best) {
                best = w.norm();
                u = w;
            }
        }
        if (best < 1e-8)
            throw std::runtime_error("bloch_messiah: degenerate zero-squeezing subspace");
        u.normalize();
        VectorXd w = -j * u;
        for (const auto& a : accepted) w -= a.dot(w) * a;
        w.normalize();
        k.col(col) = u;
        k.col(m + col) = w;
        accepted.push_back(u);
        accepted.push_back(w);
        ++col;
    }

    BlochMessiah out;
    out.k = k;
    out.r = r;
    VectorXd inv_diag(2 * m);
    inv_diag.head(m) = (-r.array()).exp();
    inv_diag.tail(m) = r.array().exp();
    out.l = inv_diag.asDiagonal() * (k.transpose() * s);
    return out;
}

namespace {

std::complex<double> unitary_entry(const MatrixXd& k, Eigen::Index i, Eigen::Index j,
                                   Eigen::Index m) {
    return {k(i, j), -k(i, m + j)};
}

}  // namespace

std::vector<Gate> givens_decompose(const MatrixXd& k, double tol) {
    const auto check = is_symplectic(k, tol);
    const double orth = (k * k.transpose() - MatrixXd::Identity(k.rows(), k.rows()))
                            .cwiseAbs()
                            .maxCoeff();
    if (!check.ok || orth > tol)
        throw std::invalid_argument("givens_decompose: input not orthogonal symplectic");

    const auto m = k.rows() / 2;
    // Equivalent complex unitary U = X - iY for K = [[X, Y], [-Y, X]].
    MatrixXcd u(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) u(i, j) = unitary_entry(k, i, j, m);

    const double prune = 1e-14;
    std::vector<Gate> ops;  // elimination ops, applied to U from the left
    for (Eigen::Index c = 0; c < m; ++c) {
        for (Eigen::Index row = c + 1; row < m; ++row) {
            const std::complex<double> pivot = u(c, c);
            const std::complex<double> target = u(row, c);
            if (std::abs(target) <= prune) continue;
            const double alpha = std::arg(pivot) - std::arg(target);
            if (std::abs(alpha) > prune) {
                u.row(row) *= std::exp(std::complex<double>(0.0, alpha));
                ops.push_back({GateKind::phase, static_cast<int>(row), -1, alpha, 0.0});
            }
            const double theta = std::atan2(std::abs(target), std::abs(pivot));
            const double cs = std::cos(theta), sn = std::sin(theta);
            const MatrixXcd row_c = u.row(c);
            const MatrixXcd row_r = u.row(row);
            u.row(c) = cs * row_c + sn * row_r;
            u.row(row) = -sn * row_c + cs * row_r;
            ops.push_back({GateKind::rotation2, static_cast<int>(c),
                           static_cast<int>(row), theta, 0.0});
        }
    }

    std::vector<Gate> program;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double phi = std::arg(u(i, i));
        if (std::abs(phi) > prune)
            program.push_back({GateKind::phase, static_cast<int>(i), -1, phi, 0.0});
    }
    for (auto it = ops.rbegin(); it != ops.rend(); ++it) {
        Gate g = *it;
        g.p1 = -g.p1;
        program.push_back(g);
    }
    return program;
}

MatrixXd gate_symplectic(const Gate& gate, int modes) {
    MatrixXd s = MatrixXd::Identity(2 * modes, 2 * modes);
    const int m = modes;
    switch (gate.kind) {
        case GateKind::rotation2: {
            const double c = std::cos(gate.p1), sn = std::sin(gate.p1);
            const int i = gate.mode, j = gate.mode2;
            for (int off : {0, m}) {
                s(off + i, off + i) = c;
                s(off + i, off + j) = sn;
                s(off + j, off + i) = -sn;
                s(off + j, off + j) = c;
            }
            break;
        }
        case GateKind::phase: {
            const double c = std::cos(gate.p1), sn = std::sin(gate.p1);
            const int i = gate.mode;
            s(i, i) = c;
            s(i, m + i) = -sn;
            s(m + i, i) = sn;
            s(m + i, m + i) = c;
            break;
        }
        case GateKind::squeeze:
            s(gate.mode, gate.mode) = std::exp(gate.p1);
            s(m + gate.mode, m + gate.mode) = std::exp(-gate.p1);
            break;
        case GateKind::momentum_square:
            s(gate.mode, m + gate.mode) = 2.0 * gate.p1;
            break;
        case GateKind::displace:
        case GateKind::momentum_shift:
            break;  // pure mean shifts
        case GateKind::cubic_phase:
            throw UnsupportedGateError("gate_symplectic: cubic phase gate is not Gaussian", 0);
    }
    return s;
}

GateProgram compile_linear(const MatrixXd& s, const VectorXd& xi) {
    if (xi.size() != s.rows())
        throw std::invalid_argument("compile_linear: bias length mismatch");
    const auto bm = bloch_messiah(s);
    const auto m = s.rows() / 2;
    const double prune = 1e-14;

    GateProgram program;
    program.modes = static_cast<int>(m);
    program.source = GateProgram::Source::linear;
    auto append = [&](const std::vector<Gate>& gates) {
        program.gates.insert(program.gates.end(), gates.begin(), gates.end());
    };
    append(givens_decompose(bm.l));
    for (Eigen::Index i = 0; i < m; ++i)
        if (std::abs(bm.r(i)) > prune)
            program.gates.push_back(
                {GateKind::squeeze, static_cast<int>(i), -1, bm.r(i), 0.0});
    append(givens_decompose(bm.k));
    for (Eigen::Index i = 0; i < m; ++i) {
        const double dphi = xi(i), dpi = xi(m + i);
        if (std::abs(dphi) > prune || std::abs(dpi) > prune)
            program.gates.push_back(
                {GateKind::displace, static_cast<int>(i), -1, dphi, dpi});
    }
    return program;
}

GaussianState simulate_gaussian(const GateProgram& program, const GaussianState& state) {
    if (state.modes() != program.modes)
        throw std::invalid_argument("simulate_gaussian: state/program mode mismatch");
    GaussianState current = state;
    const int m = program.modes;
    for (std::size_t idx = 0; idx < program.gates.size(); ++idx) {
        const Gate& gate = program.gates[idx];
        if (gate.mode < 0 || gate.mode >= m ||
            (gate.kind == GateKind::rotation2 && (gate.mode2 < 0 || gate.mode2 >= m)))
            throw std::invalid_argument("simulate_gaussian: gate mode out of range");
        switch (gate.kind) {
            case GateKind::cubic_phase:
                throw UnsupportedGateError(
                    "simulate_gaussian: cubic phase gate at index " + std::to_string(idx),
                    idx);
            case GateKind::displace:
                current.mean(gate.mode) += gate.p1;
                current.mean(m + gate.mode) += gate.p2;
                break;
            case GateKind::momentum_shift:
                current.mean(m + gate.mode) += gate.p1;
                break;
            default: {
                const MatrixXd sg = gate_symplectic(gate, m);
                current.mean = (sg * current.mean).eval();
                current.cov = (sg * current.cov * sg.transpose()).eval();
                break;
            }
        }
    }
    current.cov = 0.5 * (current.cov + current.cov.transpose()).eval();
    return current;
}

std::vector<double> softplus_taylor_coefficients(double beta, int k) {
    if (k < 0) throw std::invalid_argument("softplus_taylor_coefficients: k must be >= 0");
    if (!(beta > 0.0))
        throw std::invalid_argument("softplus_taylor_coefficients: beta must be positive");
    std::vector<double> coeffs(k + 1);
    double factorial = 1.0;
    for (int l = 0; l <= k; ++l) {
        if (l > 0) factorial *= l;
        coeffs[l] = std::pow(beta, l - 1) * (l % 2 == 0 ? 1.0 : -1.0) / factorial;
    }
    return coeffs;
}

namespace {

std::vector<Gate> dagger(std::vector<Gate> gates) {
    std::reverse(gates.begin(), gates.end());
    for (auto& g : gates) {
        g.p1 = -g.p1;
        g.p2 = -g.p2;
    }
    return gates;
}

// Gate sequence (in application order) realizing the flow of H_ell for time
// eps, built from the commutator gadget.
std::vector<Gate> emit_flow(int ell, double eps) {
    if (eps < 0.0) return dagger(emit_flow(ell, -eps));
    if (ell == 0) return {{GateKind::momentum_shift, 0, -1, eps, 0.0}};

    const double alpha = -1.0 / (4.0 * (ell + 1));
    const double sqrt_e = std::sqrt(eps);
    const double quarter = std::pow(eps, 0.25);

    const std::vector<Gate> w = {{GateKind::momentum_square, 0, -1, sqrt_e * alpha, 0.0}};
    std::vector<Gate> v = emit_flow(ell - 1, quarter);
    v.push_back({GateKind::cubic_phase, 0, -1, quarter, 0.0});
    {
        const auto inner = dagger(emit_flow(ell - 1, quarter));
        v.insert(v.end(), inner.begin(), inner.end());
    }
    v.push_back({GateKind::cubic_phase, 0, -1, -quarter, 0.0});

    // Operator product W V W^dag V^dag applies right to left.
    std::vector<Gate> out = dagger(v);
    const auto w_dag = dagger(w);
    out.insert(out.end(), w_dag.begin(), w_dag.end());
    out.insert(out.end(), v.begin(), v.end());
    out.insert(out.end(), w.begin(), w.end());
    return out;
}

}  // namespace

GateProgram compile_nonlinearity(int k, double eps, int m, double beta) {
    if (k < 0) throw std::invalid_argument("compile_nonlinearity: k must be >= 0");
    if (m < 1) throw std::invalid_argument("compile_nonlinearity: m must be >= 1");
    if (!(eps > 0.0)) throw std::invalid_argument("compile_nonlinearity: eps must be positive");

    const auto coeffs = softplus_taylor_coefficients(beta, k);
    GateProgram program;
    program.modes = 1;
    program.source = GateProgram::Source::nonlinear;
    program.trunc_k = k;
    program.eps = eps;
    program.reps = m;
    for (int sweep = 0; sweep < m; ++sweep) {
        for (int l = 0; l <= k; ++l) {
            const auto gates = emit_flow(l, eps * coeffs[l]);
            program.gates.insert(program.gates.end(), gates.begin(), gates.end());
        }
        for (int l = k; l >= 0; --l) {
            const auto gates = emit_flow(l, eps * coeffs[l]);
            program.gates.insert(program.gates.end(), gates.begin(), gates.end());
        }
    }
    return program;
}

long long per_order_gate_count(int ell) {
    if (ell < 0) throw std::invalid_argument("per_order_gate_count: ell must be >= 0");
    long long n = 1;
    for (int l = 0; l < ell; ++l) n = 6 + 4 * n;
    return n;
}

long long gate_count(int k, int m) {
    if (k < 0 || m < 1) throw std::invalid_argument("gate_count: need k >= 0, m >= 1");
    long long total = 0;
    for (int l = 0; l <= k; ++l) total += per_order_gate_count(l);
    return 2LL * m * total;
}

double h_flow(int ell, double alpha, double x) {
    if (ell < 0) throw std::invalid_argument("h_flow: ell must be >= 0");
    if (ell == 0) return x + alpha;
    if (ell == 1) return std::exp(alpha) * x;
    const double term = (ell - 1) * alpha * std::pow(x, ell - 1);
    if (term >= 1.0)
        throw FlowDomainError("h_flow: finite-time blow-up", x);
    return x * std::pow(1.0 - term, -1.0 / (ell - 1));
}

double truncated_sigma(int k, double eps, int m, double x) {
    if (k < 0 || m < 1) throw std::invalid_argument("truncated_sigma: need k >= 0, m >= 1");
    const auto coeffs = softplus_taylor_coefficients(1.0, k);
    for (int sweep = 0; sweep < m; ++sweep) {
        for (int l = 0; l <= k; ++l) x = h_flow(l, eps * coeffs[l], x);
        for (int l = k; l >= 0; --l) x = h_flow(l, eps * coeffs[l], x);
    }
    return x;
}

std::string serialize_program(const GateProgram& program) {
    char buf[160];
    std::string out;
    std::snprintf(buf, sizeof(buf), "MODES %d; SOURCE %s; K %d; EPS %.17g; M_REPS %d\n",
                  program.modes,
                  program.source == GateProgram::Source::linear ? "linear" : "nonlinear",
                  program.trunc_k, program.eps, program.reps);
    out += buf;
    for (const auto& g : program.gates) {
        switch (g.kind) {
            case GateKind::rotation2:
                std::snprintf(buf, sizeof(buf), "ROTATION2 %d,%d %.17g\n", g.mode, g.mode2,
                              g.p1);
                break;
            case GateKind::displace:
                std::snprintf(buf, sizeof(buf), "DISPLACE %d %.17g,%.17g\n", g.mode, g.p1,
                              g.p2);
                break;
            default:
                std::snprintf(buf, sizeof(buf), "%s %d %.17g\n", to_string(g.kind).c_str(),
                              g.mode, g.p1);
                break;
        }
        out += buf;
    }
    return out;
}

namespace {

GateKind kind_from_string(const std::string& name) {
    if (name == "ROTATION2") return GateKind::rotation2;
    if (name == "PHASE") return GateKind::phase;
    if (name == "SQUEEZE") return GateKind::squeeze;
    if (name == "DISPLACE") return GateKind::displace;
    if (name == "MOMENTUM_SHIFT") return GateKind::momentum_shift;
    if (name == "MOMENTUM_SQUARE") return GateKind::momentum_square;
    if (name == "CUBIC_PHASE") return GateKind::cubic_phase;
    throw std::invalid_argument("parse_program: unknown gate kind " + name);
}

}  // namespace

GateProgram parse_program(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header))
        throw std::invalid_argument("parse_program: empty input");

    GateProgram program;
    char source[16] = {0};
    if (std::sscanf(header.c_str(), "MODES %d; SOURCE %15[a-z]; K %d; EPS %lg; M_REPS %d",
                    &program.modes, source, &program.trunc_k, &program.eps,
                    &program.reps) != 5)
        throw std::invalid_argument("parse_program: malformed header");
    const std::string source_str(source);
    if (source_str == "linear")
        program.source = GateProgram::Source::linear;
    else if (source_str == "nonlinear")
        program.source = GateProgram::Source::nonlinear;
    else
        throw std::invalid_argument("parse_program: unknown source " + source_str);
    if (program.modes < 1) throw std::invalid_argument("parse_program: bad mode count");

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind_name, modes_str, params_str;
        ls >> kind_name >> modes_str >> params_str;
        if (kind_name.empty() || modes_str.empty())
            throw std::invalid_argument("parse_program: malformed gate line: " + line);
        Gate g;
        g.kind = kind_from_string(kind_name);
        if (g.kind == GateKind::rotation2) {
            if (std::sscanf(modes_str.c_str(), "%d,%d", &g.mode, &g.mode2) != 2)
                throw std::invalid_argument("parse_program: malformed modes: " + line);
        } else {
            if (std::sscanf(modes_str.c_str(), "%d", &g.mode) != 1)
                throw std::invalid_argument("parse_program: malformed mode: " + line);
        }
        if (g.kind == GateKind::displace) {
            if (std::sscanf(params_str.c_str(), "%lg,%lg", &g.p1, &g.p2) != 2)
                throw std::invalid_argument("parse_program: malformed params: " + line);
        } else {
            if (std::sscanf(params_str.c_str(), "%lg", &g.p1) != 1)
                throw std::invalid_argument("parse_program: malformed param: " + line);
        }
        if (g.mode < 0 || g.mode >= program.modes ||
            (g.kind == GateKind::rotation2 && (g.mode2 < 0 || g.mode2 >= program.modes)))
            throw std::invalid_argument("parse_program: gate mode out of range: " + line);
        program.gates.push_back(g);
    }
    if (program.source == GateProgram::Source::linear)
        for (const auto& g : program.gates)
            if (g.kind == GateKind::cubic_phase)
                throw std::invalid_argument("parse_program: cubic phase in a linear program");
    return program;
}

}  // namespace gsnn
