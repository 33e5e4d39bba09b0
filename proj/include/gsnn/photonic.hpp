#pragma once

// Lowering of symplectic layers and the softplus Hamiltonian to photonic
// gate programs: Bloch-Messiah and Givens decompositions, the
// Trotter/commutator gadget with its gate-count recursion, and the effective
// truncated nonlinearity implemented by the gadget.

#include "gsnn/gaussian.hpp"

#include <string>
#include <vector>

namespace gsnn {

enum class GateKind {
    rotation2,        // two-mode rotation by theta (acts equally on both quadratures)
    phase,            // single-mode rotation in the (phi_i, pi_i) plane
    squeeze,          // phi_i -> e^r phi_i, pi_i -> e^{-r} pi_i
    displace,         // mean shift (d_phi, d_pi) on mode i
    momentum_shift,   // adds eps to the mean momentum of mode i
    momentum_square,  // shear phi_i += 2 eps pi_i (flow of eps * pi^2)
    cubic_phase,      // cubic position gate; not Gaussian-simulable
};

std::string to_string(GateKind kind);

struct Gate {
    GateKind kind;
    int mode = 0;
    int mode2 = -1;    // rotation2 only
    double p1 = 0.0;
    double p2 = 0.0;   // displace only
};

struct GateProgram {
    int modes = 1;
    std::vector<Gate> gates;
    enum class Source { linear, nonlinear };
    Source source = Source::linear;
    int trunc_k = 0;
    double eps = 0.0;
    int reps = 0;
};

// S = K Sigma L with K, L orthogonal and symplectic and
// Sigma = diag(e^{r_1},...,e^{r_M}, e^{-r_1},...,e^{-r_M}), r_1 >= ... >= 0.
struct BlochMessiah {
    MatrixXd k;
    VectorXd r;
    MatrixXd l;

    MatrixXd sigma() const;
};

BlochMessiah bloch_messiah(const MatrixXd& s, double tol = 1e-8);

// Ordered gate list whose product (last gate leftmost) reconstructs the
// orthogonal symplectic input. At most M(M-1)/2 two-mode rotations are
// emitted; a general unitary additionally needs up to M(M+1)/2 phases.
std::vector<Gate> givens_decompose(const MatrixXd& k, double tol = 1e-8);

// givens(L) ++ squeezes(Sigma) ++ givens(K) ++ displacement, with
// zero-parameter gates pruned.
GateProgram compile_linear(const MatrixXd& s, const VectorXd& xi);

// Folds the known Gaussian action of every gate over the state. Throws
// UnsupportedGateError at the first cubic phase gate.
GaussianState simulate_gaussian(const GateProgram& program, const GaussianState& state);

// 2M x 2M symplectic matrix of a quadratic gate (identity action gates
// included; throws for cubic_phase).
MatrixXd gate_symplectic(const Gate& gate, int modes);

// Taylor coefficients of f(x) = beta^{-1} e^{-beta x}:
// f_l = beta^{l-1} (-1)^l / l!.
std::vector<double> softplus_taylor_coefficients(double beta, int k);

// The m-fold palindromic Trotter product of the per-order commutator
// gadgets, expanded to momentum_shift / momentum_square / cubic_phase gates
// on a single mode. The emitted length equals gate_count(k, m) exactly.
GateProgram compile_nonlinearity(int k, double eps, int m, double beta = 1.0);

// Per-order gadget size: N_0 = 1, N_{l+1} = 6 + 4 N_l (closed form 3*4^l - 2).
long long per_order_gate_count(int ell);
// Total program length: 2m * sum_{l=0..k} N_l.
long long gate_count(int k, int m);

// Time-alpha flow of phi' = phi^ell: x + alpha (ell = 0), e^alpha x (ell = 1),
// x (1 - (ell-1) alpha x^{ell-1})^{-1/(ell-1)} otherwise. Throws
// FlowDomainError past the blow-up time.
double h_flow(int ell, double alpha, double x);

// Effective scalar nonlinearity of the truncated, Trotterized gate program:
// m palindromic sweeps of h_{0,a_0} ... h_{k,a_k} h_{k,a_k} ... h_{0,a_0}
// with a_l = eps (-1)^l / l! (the beta = 1 coefficients).
double truncated_sigma(int k, double eps, int m, double x);

// Line-oriented text format with a single header line and one gate per line,
// 17 significant digits.
std::string serialize_program(const GateProgram& program);
GateProgram parse_program(const std::string& text);

}  // namespace gsnn
