#include "theory.hpp"

#include "rng.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace fedsim {

QuadraticProblem make_quadratic(int dim, int num_layers, uint64_t seed) {
    if (num_layers < 1 || dim < num_layers) {
        throw std::invalid_argument("make_quadratic: need dim >= num_layers >= 1");
    }
    Rng rng(seed);
    std::vector<double> m((size_t) dim * (size_t) dim);
    for (double & v : m) {
        v = rng.uniform(-1.0, 1.0);
    }

    QuadraticProblem p;
    p.dim = dim;
    p.a.assign((size_t) dim * (size_t) dim, 0.0);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) {
            double acc = 0.0;
            for (int k = 0; k < dim; ++k) {
                acc += m[(size_t) k * (size_t) dim + (size_t) i] * m[(size_t) k * (size_t) dim + (size_t) j];
            }
            p.a[(size_t) i * (size_t) dim + (size_t) j] = acc + (i == j ? 0.1 : 0.0);
        }
    }
    p.b.resize((size_t) dim);
    for (double & v : p.b) {
        v = rng.uniform(-1.0, 1.0);
    }

    // contiguous layers; the first dim % num_layers layers take one extra
    const int base = dim / num_layers;
    const int extra = dim % num_layers;
    int next = 0;
    for (int l = 0; l < num_layers; ++l) {
        const int len = base + (l < extra ? 1 : 0);
        std::vector<int> coords;
        coords.reserve((size_t) len);
        for (int i = 0; i < len; ++i) {
            coords.push_back(next++);
        }
        p.coordinate_layers.push_back(std::move(coords));
    }
    return p;
}

double quad_loss(const QuadraticProblem & p, std::span<const double> w) {
    if ((int) w.size() != p.dim) {
        throw std::invalid_argument("quad_loss: dimension mismatch");
    }
    double quad = 0.0;
    double lin = 0.0;
    for (int i = 0; i < p.dim; ++i) {
        double aw = 0.0;
        for (int j = 0; j < p.dim; ++j) {
            aw += p.a[(size_t) i * (size_t) p.dim + (size_t) j] * w[(size_t) j];
        }
        quad += w[(size_t) i] * aw;
        lin += p.b[(size_t) i] * w[(size_t) i];
    }
    return 0.5 * quad - lin;
}

std::vector<double> quad_grad(const QuadraticProblem & p, std::span<const double> w) {
    if ((int) w.size() != p.dim) {
        throw std::invalid_argument("quad_grad: dimension mismatch");
    }
    std::vector<double> g((size_t) p.dim);
    for (int i = 0; i < p.dim; ++i) {
        double aw = 0.0;
        for (int j = 0; j < p.dim; ++j) {
            aw += p.a[(size_t) i * (size_t) p.dim + (size_t) j] * w[(size_t) j];
        }
        g[(size_t) i] = aw - p.b[(size_t) i];
    }
    return g;
}

bool is_symmetric(const QuadraticProblem & p, double tol) {
    for (int i = 0; i < p.dim; ++i) {
        for (int j = i + 1; j < p.dim; ++j) {
            if (std::abs(p.a[(size_t) i * (size_t) p.dim + (size_t) j] -
                         p.a[(size_t) j * (size_t) p.dim + (size_t) i]) > tol) {
                return false;
            }
        }
    }
    return true;
}

bool is_positive_definite(const QuadraticProblem & p) {
    // Cholesky without pivoting succeeds iff A is positive definite.
    const int n = p.dim;
    std::vector<double> l((size_t) n * (size_t) n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double acc = p.a[(size_t) i * (size_t) n + (size_t) j];
            for (int k = 0; k < j; ++k) {
                acc -= l[(size_t) i * (size_t) n + (size_t) k] * l[(size_t) j * (size_t) n + (size_t) k];
            }
            if (i == j) {
                if (acc <= 0.0) {
                    return false;
                }
                l[(size_t) i * (size_t) n + (size_t) i] = std::sqrt(acc);
            } else {
                l[(size_t) i * (size_t) n + (size_t) j] = acc / l[(size_t) j * (size_t) n + (size_t) j];
            }
        }
    }
    return true;
}

double lipschitz(const QuadraticProblem & p) {
    const int n = p.dim;
    Rng rng(0x9d5f3c1a2b4e6d78ull); // fixed start vector, deterministic result
    std::vector<double> v((size_t) n);
    double norm = 0.0;
    for (double & x : v) {
        x = rng.uniform(-1.0, 1.0);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double & x : v) {
        x /= norm;
    }

    std::vector<double> av((size_t) n);
    double lambda = 0.0;
    // Iterate well past the documented 1e-10 so downstream bound checks are
    // not limited by the eigenvalue estimate.
    const double tol = 1e-13;
    for (int iter = 0; iter < 10000; ++iter) {
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) {
                acc += p.a[(size_t) i * (size_t) n + (size_t) j] * v[(size_t) j];
            }
            av[(size_t) i] = acc;
        }
        double rayleigh = 0.0;
        double av_norm = 0.0;
        for (int i = 0; i < n; ++i) {
            rayleigh += v[(size_t) i] * av[(size_t) i];
            av_norm += av[(size_t) i] * av[(size_t) i];
        }
        av_norm = std::sqrt(av_norm);
        if (av_norm == 0.0) {
            throw std::runtime_error("lipschitz: power iteration collapsed");
        }
        for (int i = 0; i < n; ++i) {
            v[(size_t) i] = av[(size_t) i] / av_norm;
        }
        if (iter > 0 && std::abs(rayleigh - lambda) <= tol * std::max(1.0, std::abs(rayleigh))) {
            return rayleigh;
        }
        lambda = rayleigh;
    }
    throw std::runtime_error("lipschitz: power iteration did not converge");
}

namespace {

std::vector<char> subset_mask(const QuadraticProblem & p, const std::vector<int> & subset_layers) {
    if (subset_layers.empty()) {
        throw std::invalid_argument("subset of layers must be non-empty");
    }
    std::vector<char> in_subset((size_t) p.dim, 0);
    for (int layer : subset_layers) {
        if (layer < 0 || (size_t) layer >= p.coordinate_layers.size()) {
            throw std::invalid_argument("layer id out of range");
        }
        for (int c : p.coordinate_layers[(size_t) layer]) {
            in_subset[(size_t) c] = 1;
        }
    }
    return in_subset;
}

} // namespace

double delta_gap(const QuadraticProblem & p, std::span<const double> w, const std::vector<int> & subset_layers) {
    const std::vector<char> mask = subset_mask(p, subset_layers);
    const std::vector<double> g = quad_grad(p, w);
    double gap = 0.0; // squared norm over the frozen coordinates
    for (int i = 0; i < p.dim; ++i) {
        if (!mask[(size_t) i]) {
            gap += g[(size_t) i] * g[(size_t) i];
        }
    }
    return gap;
}

BoundReport verify_bounds(const QuadraticProblem & p, std::span<const double> w,
                          const std::vector<int> & subset_layers, double eta, double lipschitz_L) {
    if (!(eta > 0.0)) {
        throw std::invalid_argument("verify_bounds: eta must be positive");
    }
    const std::vector<char> mask = subset_mask(p, subset_layers);
    const std::vector<double> g = quad_grad(p, w);

    BoundReport r;
    r.eta = eta;
    r.lipschitz_L = lipschitz_L;
    for (double gi : g) {
        r.grad_norm_sq += gi * gi;
    }
    for (int i = 0; i < p.dim; ++i) {
        if (!mask[(size_t) i]) {
            r.delta += g[(size_t) i] * g[(size_t) i];
        }
    }

    const double loss0 = quad_loss(p, w);
    std::vector<double> w_full(w.begin(), w.end());
    std::vector<double> w_sub(w.begin(), w.end());
    for (int i = 0; i < p.dim; ++i) {
        w_full[(size_t) i] -= eta * g[(size_t) i];
        if (mask[(size_t) i]) {
            w_sub[(size_t) i] -= eta * g[(size_t) i];
        }
    }
    r.delta_full = loss0 - quad_loss(p, w_full);
    r.delta_subset = loss0 - quad_loss(p, w_sub);

    const double shrink = 1.0 - eta * lipschitz_L / 2.0;
    r.bound_full = eta * r.grad_norm_sq * shrink;
    r.bound_subset = eta * (r.grad_norm_sq - r.delta) * shrink;
    r.full_holds = r.delta_full >= r.bound_full - 1e-9 * std::max(1.0, std::abs(r.bound_full));
    r.subset_holds = r.delta_subset >= r.bound_subset - 1e-9 * std::max(1.0, std::abs(r.bound_subset));
    r.crossover_term = -eta * r.delta * shrink;
    return r;
}

BoundReport verify_bounds(const QuadraticProblem & p, std::span<const double> w,
                          const std::vector<int> & subset_layers, double eta) {
    return verify_bounds(p, w, subset_layers, eta, lipschitz(p));
}

std::vector<BoundReport> crossover_scan(const QuadraticProblem & p, std::span<const double> w,
                                        const std::vector<int> & subset_layers,
                                        const std::vector<double> & eta_grid) {
    if (eta_grid.empty()) {
        throw std::invalid_argument("crossover_scan: empty eta grid");
    }
    for (double eta : eta_grid) {
        if (!(eta > 0.0)) {
            throw std::invalid_argument("crossover_scan: eta grid must be positive");
        }
    }
    const double lip = lipschitz(p);
    std::vector<BoundReport> out;
    out.reserve(eta_grid.size());
    for (double eta : eta_grid) {
        out.push_back(verify_bounds(p, w, subset_layers, eta, lip));
    }
    return out;
}

std::string bound_report_json(const BoundReport & r) {
    nlohmann::json j = {
        {"eta", r.eta},
        {"lipschitz_L", r.lipschitz_L},
        {"grad_norm_sq", r.grad_norm_sq},
        {"delta", r.delta},
        {"delta_full", r.delta_full},
        {"delta_subset", r.delta_subset},
        {"bound_full", r.bound_full},
        {"bound_subset", r.bound_subset},
        {"full_holds", r.full_holds},
        {"subset_holds", r.subset_holds},
        {"crossover_term", r.crossover_term},
    };
    return j.dump();
}

} // namespace fedsim
