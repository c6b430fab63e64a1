#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

#include "reachstep/log.hpp"
#include "reachstep/sdp.hpp"

namespace reachstep {

const char* to_string(SdpStatus s) {
    switch (s) {
        case SdpStatus::Optimal: return "Optimal";
        case SdpStatus::Infeasible: return "Infeasible";
        case SdpStatus::NumericalFailure: return "NumericalFailure";
        case SdpStatus::IterationLimit: return "IterationLimit";
    }
    return "?";
}

SdpOptions SdpOptions::from_env() {
    SdpOptions o;
    if (const char* env = std::getenv("REACHSTEP_SDP_MAXITER")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0 && v < 100000) o.max_iter = static_cast<int>(v);
        else log_warn(std::string("ignoring malformed REACHSTEP_SDP_MAXITER='") + env + "'");
    }
    return o;
}

void SdpProblem::validate() const {
    if (constraints.size() != b.size()) throw std::invalid_argument("constraint count does not match b");
    if (num_free < 0) throw std::invalid_argument("negative free-scalar count");
    for (int s : blocks)
        if (s == 0) throw std::invalid_argument("zero block size");
    auto check = [&](const LinearForm& f) {
        for (const auto& e : f.entries) {
            if (e.block < 0 || e.block >= static_cast<int>(blocks.size()))
                throw std::invalid_argument("entry refers to a missing block");
            int n = std::abs(blocks[static_cast<std::size_t>(e.block)]);
            if (e.row < 0 || e.col < 0 || e.row >= n || e.col >= n)
                throw std::invalid_argument("entry outside its block");
            if (e.row > e.col) throw std::invalid_argument("entries must satisfy row <= col");
            if (blocks[static_cast<std::size_t>(e.block)] < 0 && e.row != e.col)
                throw std::invalid_argument("off-diagonal entry in a diagonal block");
            if (!std::isfinite(e.value)) throw std::invalid_argument("non-finite coefficient");
        }
        for (const auto& [k, v] : f.free) {
            if (k < 0 || k >= num_free) throw std::invalid_argument("free index out of range");
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite coefficient");
        }
    };
    check(objective);
    for (const auto& c : constraints) check(c);
    for (double v : b)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite right-hand side");
}

double apply(const LinearForm& form, const std::vector<Eigen::MatrixXd>& X, const Eigen::VectorXd& s) {
    double r = 0.0;
    for (const auto& e : form.entries) {
        const auto& B = X[static_cast<std::size_t>(e.block)];
        r += e.row == e.col ? e.value * B(e.row, e.row) : 2.0 * e.value * B(e.row, e.col);
    }
    for (const auto& [k, v] : form.free) r += v * s(k);
    return r;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Blocks = std::vector<MatrixXd>;

struct BlockEntries {
    int block;
    std::vector<SparseEntry> entries;
};

// Row-scaled copy of the problem in a layout convenient for the iteration.
struct Workspace {
    std::vector<int> sizes;
    std::vector<std::vector<BlockEntries>> rows;  // per constraint, grouped by block
    MatrixXd B;                                   // m x num_free
    VectorXd b;
    VectorXd row_scale;  // original row = scaled row * row_scale
    Blocks C;
    VectorXd c_free;
    int total_dim = 0;
};

Workspace prepare(const SdpProblem& p) {
    Workspace w;
    const auto m = static_cast<Eigen::Index>(p.constraints.size());
    for (int s : p.blocks) {
        w.sizes.push_back(std::abs(s));
        w.total_dim += std::abs(s);
        w.C.push_back(MatrixXd::Zero(std::abs(s), std::abs(s)));
    }
    for (const auto& e : p.objective.entries) {
        auto& Cb = w.C[static_cast<std::size_t>(e.block)];
        Cb(e.row, e.col) += e.value;
        if (e.row != e.col) Cb(e.col, e.row) += e.value;
    }
    w.c_free = VectorXd::Zero(p.num_free);
    for (const auto& [k, v] : p.objective.free) w.c_free(k) += v;

    w.B = MatrixXd::Zero(m, p.num_free);
    w.b.resize(m);
    w.row_scale.resize(m);
    w.rows.resize(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& form = p.constraints[static_cast<std::size_t>(i)];
        // Merge duplicates so that norms and products see the true matrix.
        std::vector<SparseEntry> sorted = form.entries;
        std::sort(sorted.begin(), sorted.end(), [](const SparseEntry& a, const SparseEntry& b) {
            return std::tie(a.block, a.row, a.col) < std::tie(b.block, b.row, b.col);
        });
        std::vector<SparseEntry> merged;
        for (const auto& e : sorted) {
            if (!merged.empty() && merged.back().block == e.block && merged.back().row == e.row &&
                merged.back().col == e.col)
                merged.back().value += e.value;
            else
                merged.push_back(e);
        }
        double norm2 = 0.0;
        for (const auto& e : merged) norm2 += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
        for (const auto& [k, v] : form.free) w.B(i, k) += v;
        norm2 += w.B.row(i).squaredNorm();
        double scale = norm2 > 0.0 ? std::sqrt(norm2) : 1.0;
        w.row_scale(i) = scale;
        w.b(i) = p.b[static_cast<std::size_t>(i)] / scale;
        w.B.row(i) /= scale;
        auto& grouped = w.rows[static_cast<std::size_t>(i)];
        for (auto e : merged) {
            if (e.value == 0.0) continue;
            e.value /= scale;
            if (grouped.empty() || grouped.back().block != e.block) grouped.push_back({e.block, {}});
            grouped.back().entries.push_back(e);
        }
    }
    return w;
}

double inner(const std::vector<BlockEntries>& row, const Blocks& X) {
    double r = 0.0;
    for (const auto& be : row) {
        const auto& B = X[static_cast<std::size_t>(be.block)];
        for (const auto& e : be.entries)
            r += e.row == e.col ? e.value * B(e.row, e.row) : e.value * (B(e.row, e.col) + B(e.col, e.row));
    }
    return r;
}

VectorXd op_A(const Workspace& w, const Blocks& X) {
    VectorXd r(static_cast<Eigen::Index>(w.rows.size()));
    for (std::size_t i = 0; i < w.rows.size(); ++i) r(static_cast<Eigen::Index>(i)) = inner(w.rows[i], X);
    return r;
}

Blocks op_At(const Workspace& w, const VectorXd& y) {
    Blocks out;
    for (int n : w.sizes) out.push_back(MatrixXd::Zero(n, n));
    for (std::size_t i = 0; i < w.rows.size(); ++i) {
        double yi = y(static_cast<Eigen::Index>(i));
        if (yi == 0.0) continue;
        for (const auto& be : w.rows[i]) {
            auto& B = out[static_cast<std::size_t>(be.block)];
            for (const auto& e : be.entries) {
                B(e.row, e.col) += yi * e.value;
                if (e.row != e.col) B(e.col, e.row) += yi * e.value;
            }
        }
    }
    return out;
}

double dot(const Blocks& a, const Blocks& b) {
    double r = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) r += a[k].cwiseProduct(b[k]).sum();
    return r;
}

double max_abs(const Blocks& a) {
    double r = 0.0;
    for (const auto& m : a)
        if (m.size()) r = std::max(r, m.cwiseAbs().maxCoeff());
    return r;
}

MatrixXd sym(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Largest step keeping X + a*dX positive definite, scaled by the
// fraction-to-boundary factor; capped at 1.
double step_to_boundary(const Blocks& X, const Blocks& dX, double fraction) {
    double alpha = 1.0;
    for (std::size_t k = 0; k < X.size(); ++k) {
        Eigen::LLT<MatrixXd> llt(X[k]);
        if (llt.info() != Eigen::Success) return 0.0;
        MatrixXd L = llt.matrixL();
        MatrixXd W = L.triangularView<Eigen::Lower>().solve(dX[k]);
        W = L.triangularView<Eigen::Lower>().solve(W.transpose()).transpose();
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym(W), Eigen::EigenvaluesOnly);
        double lmin = es.eigenvalues()(0);
        if (lmin < 0.0) alpha = std::min(alpha, -fraction / lmin);
    }
    return alpha;
}

struct Direction {
    Blocks dX, dZ;
    VectorXd dy, ds;
};

class NewtonSystem {
public:
    NewtonSystem(const Workspace& w, const Blocks& X, const Blocks& Zinv) : w_(w), X_(X), Zinv_(Zinv) {
        const auto m = static_cast<Eigen::Index>(w.rows.size());
        MatrixXd M = MatrixXd::Zero(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i; j < m; ++j) {
                double v = schur_entry(w.rows[static_cast<std::size_t>(i)], w.rows[static_cast<std::size_t>(j)]);
                M(i, j) = v;
                M(j, i) = v;
            }
        llt_.compute(M);
        double reg = 1e-10 * std::max(1.0, M.diagonal().cwiseAbs().maxCoeff());
        for (int attempt = 0; attempt < 6 && llt_.info() != Eigen::Success; ++attempt) {
            llt_.compute(M + reg * MatrixXd::Identity(m, m));
            reg *= 100.0;
        }
        ok_ = llt_.info() == Eigen::Success;
        if (ok_ && w.B.cols() > 0) {
            MinvB_ = llt_.solve(w.B);
            MatrixXd S = w.B.transpose() * MinvB_;
            S += 1e-14 * std::max(1.0, S.diagonal().cwiseAbs().maxCoeff()) *
                 MatrixXd::Identity(S.rows(), S.cols());
            slu_.compute(S);
            ok_ = slu_.info() == Eigen::Success;
        }
    }

    bool ok() const { return ok_; }

    // Solves M dy + B ds = rhs, B^T dy = rf.
    void solve(const VectorXd& rhs, const VectorXd& rf, VectorXd& dy, VectorXd& ds) const {
        VectorXd Minv_rhs = llt_.solve(rhs);
        if (w_.B.cols() > 0) {
            ds = slu_.solve(w_.B.transpose() * Minv_rhs - rf);
            dy = Minv_rhs - MinvB_ * ds;
        } else {
            ds.resize(0);
            dy = Minv_rhs;
        }
    }

private:
    // <A_i, X A_j Z^{-1}> from the sparse entries of both rows.
    double schur_entry(const std::vector<BlockEntries>& ri, const std::vector<BlockEntries>& rj) const {
        double sum = 0.0;
        for (const auto& bi : ri)
            for (const auto& bj : rj) {
                if (bi.block != bj.block) continue;
                const auto& X = X_[static_cast<std::size_t>(bi.block)];
                const auto& Zi = Zinv_[static_cast<std::size_t>(bi.block)];
                for (const auto& e : bi.entries)
                    for (const auto& f : bj.entries) {
                        // tr(e_a e_b^T X e_c e_d^T Zi) = X(b,c) Zi(d,a)
                        double t = X(e.col, f.row) * Zi(f.col, e.row);
                        if (f.row != f.col) t += X(e.col, f.col) * Zi(f.row, e.row);
                        if (e.row != e.col) {
                            t += X(e.row, f.row) * Zi(f.col, e.col);
                            if (f.row != f.col) t += X(e.row, f.col) * Zi(f.row, e.col);
                        }
                        sum += e.value * f.value * t;
                    }
            }
        return sum;
    }

    const Workspace& w_;
    const Blocks& X_;
    const Blocks& Zinv_;
    Eigen::LLT<MatrixXd> llt_;
    MatrixXd MinvB_;
    Eigen::LDLT<MatrixXd> slu_;
    bool ok_ = false;
};

}  // namespace

SdpSolution solve(const SdpProblem& p, const SdpOptions& opts) {
    p.validate();
    SdpSolution sol;
    if (p.blocks.empty()) throw std::invalid_argument("degenerate problem: no blocks");
    const Workspace w = prepare(p);
    const auto m = static_cast<Eigen::Index>(w.rows.size());
    const Eigen::Index nf = p.num_free;
    const double N = static_cast<double>(w.total_dim);
    const double gamma = 0.98;

    const double b_inf = m ? w.b.cwiseAbs().maxCoeff() : 0.0;
    const double c_inf = std::max(max_abs(w.C), nf ? w.c_free.cwiseAbs().maxCoeff() : 0.0);
    const double b_orig_inf = p.b.empty() ? 0.0 : (w.b.cwiseProduct(w.row_scale)).cwiseAbs().maxCoeff();
    const double tau_p = 1.0 + b_inf;
    const double tau_d = 1.0 + c_inf;

    Blocks X, Z;
    for (int n : w.sizes) {
        X.push_back(tau_p * MatrixXd::Identity(n, n));
        Z.push_back(tau_d * MatrixXd::Identity(n, n));
    }
    VectorXd y = VectorXd::Zero(m);
    VectorXd s = VectorXd::Zero(nf);

    auto finish = [&](SdpStatus status, int iter, const std::string& msg) {
        sol.status = status;
        sol.iterations = iter;
        sol.message = msg;
        sol.X = X;
        sol.Z = Z;
        sol.s = s;
        sol.y = y.cwiseQuotient(w.row_scale);
        sol.primal_objective = dot(w.C, X) + w.c_free.dot(s);
        sol.dual_objective = w.b.dot(y);
        sol.gap = std::abs(sol.primal_objective - sol.dual_objective);
        return sol;
    };

    double best_merit = std::numeric_limits<double>::infinity();
    int stall = 0;
    for (int iter = 0;; ++iter) {
        VectorXd rp = w.b - op_A(w, X) - w.B * s;
        Blocks Rd = op_At(w, y);
        for (std::size_t k = 0; k < Rd.size(); ++k) Rd[k] = w.C[k] - Rd[k] - Z[k];
        VectorXd rf = w.c_free - w.B.transpose() * y;

        const double pobj = dot(w.C, X) + w.c_free.dot(s);
        const double dobj = w.b.dot(y);
        const double mu = dot(X, Z) / N;
        const double pres = m ? rp.cwiseProduct(w.row_scale).cwiseAbs().maxCoeff() / (1.0 + b_orig_inf) : 0.0;
        const double dres = std::max(max_abs(Rd), nf ? rf.cwiseAbs().maxCoeff() : 0.0) / (1.0 + c_inf);
        const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        sol.primal_residual = pres;
        sol.dual_residual = dres;
        log_debug("sdp iter " + std::to_string(iter) + " pobj " + std::to_string(pobj) + " dobj " +
                  std::to_string(dobj) + " pres " + std::to_string(pres) + " dres " + std::to_string(dres) +
                  " mu " + std::to_string(mu));

        if (!std::isfinite(pobj) || !std::isfinite(dobj) || !std::isfinite(mu))
            return finish(SdpStatus::NumericalFailure, iter, "non-finite iterate");
        if (relgap <= opts.gap_tol && pres <= opts.feas_tol && dres <= opts.feas_tol &&
            mu * N / (1.0 + std::abs(pobj) + std::abs(dobj)) <= opts.gap_tol)
            return finish(SdpStatus::Optimal, iter, "converged");

        // Farkas-type certificates along diverging iterates.
        if (dobj > 0.0) {
            Blocks Aty = op_At(w, y);
            double viol = 0.0;
            for (std::size_t k = 0; k < Aty.size(); ++k) {
                Eigen::SelfAdjointEigenSolver<MatrixXd> es(Aty[k], Eigen::EigenvaluesOnly);
                viol = std::max(viol, es.eigenvalues().maxCoeff());
            }
            viol = std::max(viol, nf ? (w.B.transpose() * y).cwiseAbs().maxCoeff() : 0.0);
            if (viol / dobj < 1e-8 && dobj > 1e3 * (1.0 + c_inf))
                return finish(SdpStatus::Infeasible, iter, "primal infeasible (dual ray)");
        }
        if (pobj < 0.0) {
            VectorXd AX = op_A(w, X) + w.B * s;
            double viol = m ? AX.cwiseAbs().maxCoeff() : 0.0;
            if (viol / -pobj < 1e-8 && -pobj > 1e3 * (1.0 + b_inf))
                return finish(SdpStatus::Infeasible, iter, "dual infeasible (primal ray)");
        }

        if (iter >= opts.max_iter) return finish(SdpStatus::IterationLimit, iter, "iteration limit");

        const double merit = std::max({relgap, pres, dres});
        if (merit < 0.999 * best_merit) {
            best_merit = merit;
            stall = 0;
        } else if (++stall > 30) {
            return finish(SdpStatus::NumericalFailure, iter, "residuals stalled");
        }

        Blocks Zinv;
        for (const auto& Zk : Z) {
            Eigen::LLT<MatrixXd> llt(Zk);
            if (llt.info() != Eigen::Success) return finish(SdpStatus::NumericalFailure, iter, "Z lost definiteness");
            Zinv.push_back(sym(llt.solve(MatrixXd::Identity(Zk.rows(), Zk.cols()))));
        }
        NewtonSystem newton(w, X, Zinv);
        if (!newton.ok()) return finish(SdpStatus::NumericalFailure, iter, "singular Schur complement");

        // X R_d Z^-1 enters both predictor and corrector.
        Blocks XRdZi;
        for (std::size_t k = 0; k < X.size(); ++k) XRdZi.push_back(sym(X[k] * Rd[k] * Zinv[k]));

        auto direction = [&](double sigma, const Direction* pred) {
            Direction d;
            Blocks H;
            for (std::size_t k = 0; k < X.size(); ++k) {
                MatrixXd Hk = sigma * mu * Zinv[k] - X[k] - XRdZi[k];
                if (pred) Hk -= sym(pred->dX[k] * pred->dZ[k] * Zinv[k]);
                H.push_back(Hk);
            }
            VectorXd rhs = rp - op_A(w, H);
            newton.solve(rhs, rf, d.dy, d.ds);
            d.dZ = op_At(w, d.dy);
            for (std::size_t k = 0; k < X.size(); ++k) d.dZ[k] = sym(Rd[k] - d.dZ[k]);
            for (std::size_t k = 0; k < X.size(); ++k)
                d.dX.push_back(sym(H[k] + X[k] * (Rd[k] - d.dZ[k]) * Zinv[k]));
            return d;
        };

        Direction pred = direction(0.0, nullptr);
        double ap = step_to_boundary(X, pred.dX, 1.0);
        double ad = step_to_boundary(Z, pred.dZ, 1.0);
        double mu_aff = 0.0;
        for (std::size_t k = 0; k < X.size(); ++k)
            mu_aff += (X[k] + ap * pred.dX[k]).cwiseProduct(Z[k] + ad * pred.dZ[k]).sum();
        mu_aff /= N;
        double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

        Direction d = direction(sigma, &pred);
        ap = std::min(1.0, step_to_boundary(X, d.dX, gamma));
        ad = std::min(1.0, step_to_boundary(Z, d.dZ, gamma));
        if (ap < 1e-12 && ad < 1e-12) return finish(SdpStatus::NumericalFailure, iter, "step length collapsed");
        for (std::size_t k = 0; k < X.size(); ++k) {
            X[k] = sym(X[k] + ap * d.dX[k]);
            Z[k] = sym(Z[k] + ad * d.dZ[k]);
        }
        if (nf) s += ap * d.ds;
        y += ad * d.dy;
    }
}

}  // namespace reachstep
