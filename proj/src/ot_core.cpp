#include "otalign/ot_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "otalign/csv_io.hpp"
#include "otalign/error.hpp"

namespace otalign {

namespace {

double max_entry(const Matrix& m) {
    double mx = 0.0;
    for (double x : m.data()) mx = std::max(mx, x);
    return mx;
}

void check_marginal(const Vector& w, std::size_t expected, const char* which) {
    if (w.size() != expected) {
        throw ValidationError(std::string("sinkhorn: ") + which + " marginal length mismatch");
    }
    double sum = 0.0;
    for (double x : w) {
        if (!(x >= 0.0)) throw ValidationError(std::string("sinkhorn: ") + which + " marginal has a negative entry");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw ValidationError(std::string("sinkhorn: ") + which + " marginal must sum to 1 (got " +
                              format_double(sum) + ")");
    }
}

double xlogx_minus_x(double t) {
    if (t <= 0.0) return 0.0; // 0 log 0 := 0, minus the linear part of an absent entry
    return t * (std::log(t) - 1.0);
}

// log(sum_k exp(v_k)) with the usual max shift; -inf inputs drop out.
double log_sum_exp(std::span<const double> v) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : v) mx = std::max(mx, x);
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double x : v) s += std::exp(x - mx);
    return mx + std::log(s);
}

struct ScalingState {
    Matrix kernel;
    Vector alpha, beta;
};

double scaling_violation(const ScalingState& st, const Vector& u, const Vector& v) {
    const Matrix& k = st.kernel;
    double worst = 0.0;
    // Row sums of T = diag(alpha) K diag(beta).
    for (std::size_t i = 0; i < k.rows(); ++i) {
        auto row = k.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < k.cols(); ++j) s += row[j] * st.beta[j];
        worst = std::max(worst, std::abs(st.alpha[i] * s - u[i]));
    }
    for (std::size_t j = 0; j < k.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < k.rows(); ++i) s += st.alpha[i] * k(i, j);
        worst = std::max(worst, std::abs(s * st.beta[j] - v[j]));
    }
    return worst;
}

SinkhornResult run_scaling(const OtProblem& p, const IterationTrace& trace) {
    const std::size_t m = p.cost.rows();
    const std::size_t n = p.cost.cols();

    ScalingState st;
    st.kernel = Matrix(m, n);
    for (std::size_t i = 0; i < m * n; ++i) {
        st.kernel.data()[i] = std::exp(-p.cost.data()[i] / p.epsilon);
    }
    for (std::size_t i = 0; i < m; ++i) {
        bool all_zero = true;
        for (double x : st.kernel.row(i)) {
            if (x > 0.0) { all_zero = false; break; }
        }
        if (all_zero) {
            throw SolverError("sinkhorn: kernel row " + std::to_string(i) +
                              " underflowed to zero; increase epsilon or use log-domain mode");
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        bool all_zero = true;
        for (std::size_t i = 0; i < m; ++i) {
            if (st.kernel(i, j) > 0.0) { all_zero = false; break; }
        }
        if (all_zero) {
            throw SolverError("sinkhorn: kernel column " + std::to_string(j) +
                              " underflowed to zero; increase epsilon or use log-domain mode");
        }
    }

    st.alpha.assign(m, 1.0 / static_cast<double>(m));
    st.beta.assign(n, 1.0 / static_cast<double>(n));

    SinkhornResult result;
    double violation = scaling_violation(st, p.row_marginal, p.col_marginal);
    std::size_t iter = 0;
    while (iter < p.max_iters && !(p.tol > 0.0 && violation <= p.tol)) {
        // alpha <- u / (K beta)
        for (std::size_t i = 0; i < m; ++i) {
            auto row = st.kernel.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += row[j] * st.beta[j];
            if (s <= 0.0 || !std::isfinite(s)) {
                throw SolverError("sinkhorn: scaling collapse at row " + std::to_string(i) +
                                  "; increase epsilon or use log-domain mode");
            }
            st.alpha[i] = p.row_marginal[i] / s;
        }
        // beta <- v / (K^t alpha)
        Vector kt_alpha(n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            auto row = st.kernel.row(i);
            double a = st.alpha[i];
            for (std::size_t j = 0; j < n; ++j) kt_alpha[j] += a * row[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (kt_alpha[j] <= 0.0 || !std::isfinite(kt_alpha[j])) {
                throw SolverError("sinkhorn: scaling collapse at column " + std::to_string(j) +
                                  "; increase epsilon or use log-domain mode");
            }
            st.beta[j] = p.col_marginal[j] / kt_alpha[j];
        }
        ++iter;
        violation = scaling_violation(st, p.row_marginal, p.col_marginal);
        if (trace) trace(iter, violation);
    }

    result.plan = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            result.plan(i, j) = st.alpha[i] * st.kernel(i, j) * st.beta[j];
        }
    }
    result.iterations_run = iter;
    result.marginal_violation = violation;
    return result;
}

SinkhornResult run_log_domain(const OtProblem& p, const IterationTrace& trace) {
    const std::size_t m = p.cost.rows();
    const std::size_t n = p.cost.cols();
    const double eps = p.epsilon;
    const double neg_inf = -std::numeric_limits<double>::infinity();

    Vector log_u(m), log_v(n);
    for (std::size_t i = 0; i < m; ++i) log_u[i] = p.row_marginal[i] > 0.0 ? std::log(p.row_marginal[i]) : neg_inf;
    for (std::size_t j = 0; j < n; ++j) log_v[j] = p.col_marginal[j] > 0.0 ? std::log(p.col_marginal[j]) : neg_inf;

    // Potentials f, g with T_ij = exp((f_i + g_j - C_ij) / eps). g = 0 start
    // mirrors the scaling path's unit beta up to normalization.
    Vector f(m, 0.0), g(n, 0.0);
    Vector scratch(std::max(m, n), 0.0);

    auto violation_now = [&]() {
        double worst = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) scratch[j] = (f[i] + g[j] - p.cost(i, j)) / eps;
            double row_sum = std::exp(log_sum_exp({scratch.data(), n}));
            worst = std::max(worst, std::abs(row_sum - p.row_marginal[i]));
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < m; ++i) scratch[i] = (f[i] + g[j] - p.cost(i, j)) / eps;
            double col_sum = std::exp(log_sum_exp({scratch.data(), m}));
            worst = std::max(worst, std::abs(col_sum - p.col_marginal[j]));
        }
        return worst;
    };

    SinkhornResult result;
    double violation = violation_now();
    std::size_t iter = 0;
    while (iter < p.max_iters && !(p.tol > 0.0 && violation <= p.tol)) {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) scratch[j] = (g[j] - p.cost(i, j)) / eps;
            f[i] = log_u[i] == neg_inf ? neg_inf : eps * (log_u[i] - log_sum_exp({scratch.data(), n}));
        }
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < m; ++i) scratch[i] = (f[i] - p.cost(i, j)) / eps;
            g[j] = log_v[j] == neg_inf ? neg_inf : eps * (log_v[j] - log_sum_exp({scratch.data(), m}));
        }
        ++iter;
        violation = violation_now();
        if (trace) trace(iter, violation);
    }

    result.plan = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double e = (f[i] + g[j] - p.cost(i, j)) / eps;
            result.plan(i, j) = e == neg_inf ? 0.0 : std::exp(e);
        }
    }
    result.iterations_run = iter;
    result.marginal_violation = violation;
    return result;
}

} // namespace

OtProblem OtProblem::uniform(Matrix cost, double epsilon, std::size_t max_iters, double tol) {
    OtProblem p;
    p.row_marginal.assign(cost.rows(), 1.0 / static_cast<double>(cost.rows()));
    p.col_marginal.assign(cost.cols(), 1.0 / static_cast<double>(cost.cols()));
    p.cost = std::move(cost);
    p.epsilon = epsilon;
    p.max_iters = max_iters;
    p.tol = tol;
    return p;
}

void OtProblem::validate() const {
    if (cost.rows() == 0 || cost.cols() == 0) {
        throw ValidationError("sinkhorn: empty cost matrix");
    }
    for (double x : cost.data()) {
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw ValidationError("sinkhorn: cost entries must be finite and >= 0");
        }
    }
    if (!(epsilon > 0.0)) {
        throw ValidationError("sinkhorn: epsilon must be > 0");
    }
    check_marginal(row_marginal, cost.rows(), "row");
    check_marginal(col_marginal, cost.cols(), "column");
}

SinkhornResult sinkhorn(const OtProblem& problem, SinkhornMode mode, const IterationTrace& trace) {
    problem.validate();
    if (mode == SinkhornMode::Auto) {
        mode = problem.epsilon < 0.01 * max_entry(problem.cost) ? SinkhornMode::LogDomain : SinkhornMode::Scaling;
    }
    SinkhornResult result =
        mode == SinkhornMode::LogDomain ? run_log_domain(problem, trace) : run_scaling(problem, trace);
    OtDistance d = ot_distance(result.plan, problem.cost, problem.epsilon);
    result.linear_term = d.linear_term;
    result.distance = d.total;
    return result;
}

double exact_ot_oracle(const Matrix& cost) {
    const std::size_t n = cost.rows();
    if (n == 0 || cost.cols() != n) {
        throw ValidationError("exact_ot_oracle: cost must be square and nonempty");
    }
    if (n > 8) {
        throw ValidationError("exact_ot_oracle: n > 8 rejected (factorial enumeration)");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += cost(i, perm[i]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(n);
}

OtDistance ot_distance(const Matrix& plan, const Matrix& cost, double epsilon) {
    if (plan.rows() != cost.rows() || plan.cols() != cost.cols()) {
        throw ValidationError("ot_distance: plan/cost shape mismatch");
    }
    OtDistance d;
    for (std::size_t i = 0; i < plan.size(); ++i) {
        d.linear_term += plan.data()[i] * cost.data()[i];
        d.entropic_term += xlogx_minus_x(plan.data()[i]);
    }
    d.entropic_term *= epsilon;
    d.total = d.linear_term + d.entropic_term;
    return d;
}

void export_plan(const Matrix& plan, std::span<const std::string> row_ids, std::span<const std::string> col_ids,
                 const std::filesystem::path& path) {
    if (row_ids.size() != plan.rows() || col_ids.size() != plan.cols()) {
        throw ValidationError("export_plan: id count does not match plan shape");
    }
    std::ostringstream out;
    out << "id";
    for (const auto& c : col_ids) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < plan.rows(); ++i) {
        out << row_ids[i];
        for (std::size_t j = 0; j < plan.cols(); ++j) {
            out << ',' << format_double(plan(i, j));
        }
        out << '\n';
    }
    write_text(path, out.str());
}

PlanCsv read_plan_csv(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw ParseError("empty plan CSV: " + path.string());
    PlanCsv out;
    auto header = split(lines[0], ',');
    if (header.empty() || header[0] != "id") {
        throw ParseError("plan CSV header must start with 'id': " + path.string());
    }
    out.col_ids.assign(header.begin() + 1, header.end());
    std::vector<Vector> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        auto cells = split(lines[i], ',');
        if (cells.size() != out.col_ids.size() + 1) {
            throw ParseError("plan CSV row width mismatch in " + path.string());
        }
        out.row_ids.push_back(cells[0]);
        Vector row;
        row.reserve(out.col_ids.size());
        for (std::size_t j = 1; j < cells.size(); ++j) row.push_back(parse_double(cells[j]));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("plan CSV has no data rows: " + path.string());
    out.plan = Matrix(rows.size(), out.col_ids.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < out.col_ids.size(); ++j) out.plan(i, j) = rows[i][j];
    }
    return out;
}

} // namespace otalign
