#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "otalign/numerics.hpp"

namespace otalign {

struct OtProblem {
    Matrix cost;         // M x N, nonnegative finite entries
    Vector row_marginal; // u, length M, nonnegative, sums to 1
    Vector col_marginal; // v, length N, nonnegative, sums to 1
    double epsilon = 0.10;
    std::size_t max_iters = 100;
    double tol = 1e-9; // tol <= 0 disables early stop (fixed iteration count)

    static OtProblem uniform(Matrix cost, double epsilon, std::size_t max_iters = 100, double tol = 1e-9);
    void validate() const;
};

struct SinkhornResult {
    Matrix plan;
    double distance = 0.0;    // <T,C> + eps * sum T_ij (log T_ij - 1)
    double linear_term = 0.0; // <T,C>
    std::size_t iterations_run = 0;
    double marginal_violation = 0.0; // max of ||T1 - u||_inf and ||T^t 1 - v||_inf
};

enum class SinkhornMode {
    Auto,      // log-domain when epsilon < 0.01 * max(C), scaling otherwise
    Scaling,   // kernel K = exp(-C/eps) with alternating diagonal scaling
    LogDomain, // same fixed point computed on dual potentials with log-sum-exp
};

// Called after each full scaling update pair.
using IterationTrace = std::function<void(std::size_t iteration, double marginal_violation)>;

// Entropic OT by Sinkhorn-Knopp. Not converging within max_iters is not an
// error; the result carries the achieved marginal violation. A numerically
// all-zero kernel row/column in scaling mode throws SolverError suggesting a
// larger epsilon or log-domain mode.
SinkhornResult sinkhorn(const OtProblem& problem, SinkhornMode mode = SinkhornMode::Auto,
                        const IterationTrace& trace = {});

// Unregularized optimum under uniform marginals by enumerating all n!
// assignments; rejects n > 8.
double exact_ot_oracle(const Matrix& cost);

struct OtDistance {
    double linear_term = 0.0;
    double entropic_term = 0.0; // eps * sum T_ij (log T_ij - 1), with 0 log 0 = 0
    double total = 0.0;
};

OtDistance ot_distance(const Matrix& plan, const Matrix& cost, double epsilon);

// Plan CSV: header "id,<col_ids...>", one row per row_id, full-precision
// entries.
void export_plan(const Matrix& plan, std::span<const std::string> row_ids, std::span<const std::string> col_ids,
                 const std::filesystem::path& path);

struct PlanCsv {
    Matrix plan;
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
};

PlanCsv read_plan_csv(const std::filesystem::path& path);

} // namespace otalign
