#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fedsim {

// Synthetic smooth objective L(w) = 0.5 w'Aw - b'w with A symmetric positive
// definite, so the gradient is exactly Lipschitz with constant lambda_max(A)
// and the smoothness inequality can be checked numerically to tight
// tolerances. Coordinates are split into disjoint "layers" that play the role
// of the model's update units.
struct QuadraticProblem {
    int dim = 0;
    std::vector<double> a; // dim x dim row-major
    std::vector<double> b;
    std::vector<std::vector<int>> coordinate_layers;
};

// A = M'M + 0.1 I for a seeded random M, b seeded random, contiguous layers.
QuadraticProblem make_quadratic(int dim, int num_layers, uint64_t seed);

double quad_loss(const QuadraticProblem & p, std::span<const double> w);
std::vector<double> quad_grad(const QuadraticProblem & p, std::span<const double> w);

bool is_symmetric(const QuadraticProblem & p, double tol = 1e-12);
bool is_positive_definite(const QuadraticProblem & p); // Cholesky feasibility

// lambda_max(A) by power iteration (Rayleigh quotient), relative tolerance
// 1e-10 within at most 10000 iterations; throws on non-convergence.
double lipschitz(const QuadraticProblem & p);

// Tight gap delta = ||grad||^2 - ||grad restricted to the subset||^2, i.e.
// the squared gradient norm over the frozen coordinates. Always >= 0.
double delta_gap(const QuadraticProblem & p, std::span<const double> w, const std::vector<int> & subset_layers);

struct BoundReport {
    double eta = 0.0;
    double lipschitz_L = 0.0;
    double grad_norm_sq = 0.0;
    double delta = 0.0;          // subset gradient gap
    double delta_full = 0.0;     // measured loss reduction, full step
    double delta_subset = 0.0;   // measured loss reduction, subset step
    double bound_full = 0.0;     // eta * ||g||^2 * (1 - eta L / 2)
    double bound_subset = 0.0;   // eta * (||g||^2 - delta) * (1 - eta L / 2)
    bool full_holds = false;
    bool subset_holds = false;
    double crossover_term = 0.0; // -eta * delta * (1 - eta L / 2)
};

// Takes the full gradient step and the subset-restricted step from w, measures
// both loss reductions and compares them against the smoothness bounds with
// tolerance 1e-9 * max(1, |bound|).
BoundReport verify_bounds(const QuadraticProblem & p, std::span<const double> w,
                          const std::vector<int> & subset_layers, double eta);

BoundReport verify_bounds(const QuadraticProblem & p, std::span<const double> w,
                          const std::vector<int> & subset_layers, double eta, double lipschitz_L);

// One report per grid entry. The crossover term changes sign from negative to
// non-negative exactly at eta * L = 2 (for delta > 0).
std::vector<BoundReport> crossover_scan(const QuadraticProblem & p, std::span<const double> w,
                                        const std::vector<int> & subset_layers,
                                        const std::vector<double> & eta_grid);

std::string bound_report_json(const BoundReport & r);

} // namespace fedsim
