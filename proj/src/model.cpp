#include "semfit/model.hpp"

#include "semfit/errors.hpp"

#include <algorithm>
#include <utility>

namespace semfit {

const char* to_string(MatrixKind kind) noexcept {
    switch (kind) {
        case MatrixKind::Lambda:
            return "Lambda";
        case MatrixKind::Phi:
            return "Phi";
        case MatrixKind::Psi:
            return "Psi";
    }
    return "?";
}

PatternPosition PatternPosition::make(MatrixKind matrix, int row, int col) {
    if (matrix != MatrixKind::Lambda && row < col) {
        std::swap(row, col);
    }
    return PatternPosition{matrix, row, col};
}

std::string to_string(const PatternPosition& pos) {
    return std::string(to_string(pos.matrix)) + "(" + std::to_string(pos.row + 1) + "," + std::to_string(pos.col + 1) +
           ")";
}

PatternGrid::PatternGrid(int rows, int cols, bool symmetric, ParamEntry fill)
    : rows_(rows), cols_(cols), symmetric_(symmetric) {
    if (rows < 0 || cols < 0) {
        throw DimensionError("pattern grid dimensions must be nonnegative");
    }
    if (symmetric && rows != cols) {
        throw DimensionError("symmetric pattern grid must be square");
    }
    const auto n = symmetric ? static_cast<std::size_t>(moment_count(rows))
                             : static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    cells_.assign(n, fill);
}

std::size_t PatternGrid::offset(int r, int c) const {
    if (r < 0 || c < 0 || r >= rows_ || c >= cols_) {
        throw DimensionError("pattern index (" + std::to_string(r) + "," + std::to_string(c) + ") out of range");
    }
    if (!symmetric_) {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(c);
    }
    if (r < c) {
        std::swap(r, c);
    }
    return static_cast<std::size_t>(r * (r + 1) / 2 + c);
}

const ParamEntry& PatternGrid::at(int r, int c) const { return cells_[offset(r, c)]; }
ParamEntry& PatternGrid::at(int r, int c) { return cells_[offset(r, c)]; }

namespace {

std::vector<std::string> default_names(const std::string& prefix, int n) {
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        out.push_back(prefix + std::to_string(i + 1));
    }
    return out;
}

template <typename Fn>
void for_each_cell(const PatternGrid& grid, Fn&& fn) {
    for (int r = 0; r < grid.rows(); ++r) {
        const int cmax = grid.symmetric() ? r + 1 : grid.cols();
        for (int c = 0; c < cmax; ++c) {
            fn(r, c, grid.at(r, c));
        }
    }
}

double fixed_value(const ParamEntry& e) { return std::get<FixedValue>(e).value; }

}  // namespace

CfaModel::CfaModel(PatternGrid lambda, PatternGrid phi, PatternGrid psi, std::vector<std::string> observed,
                   std::vector<std::string> factors)
    : lambda_(std::move(lambda)),
      phi_(std::move(phi)),
      psi_(std::move(psi)),
      observed_(std::move(observed)),
      factors_(std::move(factors)) {
    const int p = lambda_.rows();
    const int m = lambda_.cols();
    if (lambda_.symmetric()) {
        throw ModelSpecError("loading pattern must be rectangular");
    }
    if (!phi_.symmetric() || phi_.rows() != m) {
        throw DimensionError("factor covariance pattern must be symmetric m x m");
    }
    if (!psi_.symmetric() || psi_.rows() != p) {
        throw DimensionError("unique covariance pattern must be symmetric p x p");
    }
    if (observed_.empty()) {
        observed_ = default_names("x", p);
    }
    if (factors_.empty()) {
        factors_ = default_names("F", m);
    }
    if (static_cast<int>(observed_.size()) != p || static_cast<int>(factors_.size()) != m) {
        throw DimensionError("variable name lists do not match pattern dimensions");
    }

    std::vector<std::optional<PatternPosition>> slots;
    auto collect = [&](MatrixKind kind) {
        return [&, kind](int r, int c, const ParamEntry& e) {
            if (const auto* f = std::get_if<FreeParam>(&e)) {
                if (f->index < 0) {
                    throw ModelSpecError("negative free-parameter index at " +
                                         to_string(PatternPosition::make(kind, r, c)));
                }
                const auto idx = static_cast<std::size_t>(f->index);
                if (idx >= slots.size()) {
                    slots.resize(idx + 1);
                }
                if (slots[idx]) {
                    throw ModelSpecError("free-parameter index " + std::to_string(f->index) + " used twice");
                }
                slots[idx] = PatternPosition::make(kind, r, c);
            }
        };
    };
    for_each_cell(lambda_, collect(MatrixKind::Lambda));
    for_each_cell(phi_, collect(MatrixKind::Phi));
    for_each_cell(psi_, collect(MatrixKind::Psi));

    free_.reserve(slots.size());
    for (std::size_t k = 0; k < slots.size(); ++k) {
        if (!slots[k]) {
            throw ModelSpecError("free-parameter indices are not contiguous: index " + std::to_string(k) +
                                 " is missing");
        }
        free_.push_back(*slots[k]);
    }

    // Each factor needs a scale: a fixed variance, or a fixed nonzero loading
    // when the variance is free.
    for (int j = 0; j < m; ++j) {
        if (!is_free(phi_.at(j, j))) {
            if (fixed_value(phi_.at(j, j)) <= 0.0) {
                throw ModelSpecError("fixed variance of factor " + factors_[static_cast<std::size_t>(j)] +
                                     " must be positive");
            }
            continue;
        }
        bool has_marker = false;
        for (int i = 0; i < p; ++i) {
            const auto& e = lambda_.at(i, j);
            has_marker = has_marker || (!is_free(e) && fixed_value(e) != 0.0);
        }
        if (!has_marker) {
            throw ModelSpecError("factor " + factors_[static_cast<std::size_t>(j)] +
                                 " has a free variance and no fixed nonzero loading");
        }
    }

    if (q() > moment_count(p)) {
        throw OverParameterizedError("model has " + std::to_string(q()) + " free parameters but only " +
                                     std::to_string(moment_count(p)) + " distinct moments");
    }
}

const ParamEntry& CfaModel::entry(const PatternPosition& pos) const {
    switch (pos.matrix) {
        case MatrixKind::Lambda:
            return lambda_.at(pos.row, pos.col);
        case MatrixKind::Phi:
            return phi_.at(pos.row, pos.col);
        case MatrixKind::Psi:
            return psi_.at(pos.row, pos.col);
    }
    throw ModelSpecError("unknown matrix kind");
}

std::optional<int> CfaModel::free_index_of(const PatternPosition& pos) const {
    const auto norm = PatternPosition::make(pos.matrix, pos.row, pos.col);
    const auto it = std::find(free_.begin(), free_.end(), norm);
    if (it == free_.end()) {
        return std::nullopt;
    }
    return static_cast<int>(it - free_.begin());
}

CfaModel CfaModel::with_freed(const PatternPosition& pos) const {
    const auto& current = entry(pos);
    if (is_free(current)) {
        throw ModelSpecError(to_string(pos) + " is already free");
    }
    PatternGrid lambda = lambda_;
    PatternGrid phi = phi_;
    PatternGrid psi = psi_;
    const ParamEntry freed = FreeParam{q(), fixed_value(current)};
    switch (pos.matrix) {
        case MatrixKind::Lambda:
            lambda.at(pos.row, pos.col) = freed;
            break;
        case MatrixKind::Phi:
            phi.at(pos.row, pos.col) = freed;
            break;
        case MatrixKind::Psi:
            psi.at(pos.row, pos.col) = freed;
            break;
    }
    return CfaModel(std::move(lambda), std::move(phi), std::move(psi), observed_, factors_);
}

namespace {

Matrix fill_matrix(const PatternGrid& grid, const ParameterVector& theta) {
    Matrix out(grid.rows(), grid.cols());
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) {
            const auto& e = grid.at(r, c);
            out(r, c) = is_free(e) ? theta[std::get<FreeParam>(e).index] : fixed_value(e);
        }
    }
    return out;
}

}  // namespace

ModelMatrices unpack(const CfaModel& model, const ParameterVector& theta) {
    if (theta.size() != model.q()) {
        throw DimensionError("parameter vector has length " + std::to_string(theta.size()) + ", model expects " +
                             std::to_string(model.q()));
    }
    return ModelMatrices{fill_matrix(model.lambda_pattern(), theta), fill_matrix(model.phi_pattern(), theta),
                         fill_matrix(model.psi_pattern(), theta)};
}

ParameterVector pack(const CfaModel& model, const ModelMatrices& matrices) {
    if (matrices.lambda.rows() != model.p() || matrices.lambda.cols() != model.m() ||
        matrices.phi.rows() != model.m() || matrices.phi.cols() != model.m() || matrices.psi.rows() != model.p() ||
        matrices.psi.cols() != model.p()) {
        throw DimensionError("matrices do not match model dimensions");
    }
    Vector theta(model.q());
    for (int k = 0; k < model.q(); ++k) {
        const auto& pos = model.free_position(k);
        switch (pos.matrix) {
            case MatrixKind::Lambda:
                theta(k) = matrices.lambda(pos.row, pos.col);
                break;
            case MatrixKind::Phi:
                theta(k) = matrices.phi(pos.row, pos.col);
                break;
            case MatrixKind::Psi:
                theta(k) = matrices.psi(pos.row, pos.col);
                break;
        }
    }
    return ParameterVector(std::move(theta));
}

Matrix implied_covariance(const ModelMatrices& matrices) {
    Matrix sigma = matrices.lambda * matrices.phi * matrices.lambda.transpose() + matrices.psi;
    // Symmetrize to remove rounding asymmetry from the triple product.
    Matrix sym = 0.5 * (sigma + sigma.transpose());
    return sym;
}

Matrix implied_covariance(const CfaModel& model, const ParameterVector& theta) {
    return implied_covariance(unpack(model, theta));
}

int degrees_of_freedom(const CfaModel& model) {
    const int df = moment_count(model.p()) - model.q();
    if (df < 0) {
        throw OverParameterizedError("negative degrees of freedom");
    }
    return df;
}

Vector contract_sigma_derivatives(const CfaModel& model, const ModelMatrices& matrices, const Matrix& m) {
    const Matrix ma = m * (matrices.lambda * matrices.phi);         // p x m
    const Matrix lml = matrices.lambda.transpose() * m * matrices.lambda;  // m x m
    Vector out(model.q());
    for (int k = 0; k < model.q(); ++k) {
        const auto& pos = model.free_position(k);
        const double off = pos.row == pos.col ? 1.0 : 2.0;
        switch (pos.matrix) {
            case MatrixKind::Lambda:
                out(k) = 2.0 * ma(pos.row, pos.col);
                break;
            case MatrixKind::Phi:
                out(k) = off * lml(pos.row, pos.col);
                break;
            case MatrixKind::Psi:
                out(k) = off * m(pos.row, pos.col);
                break;
        }
    }
    return out;
}

Matrix sigma_derivative(const CfaModel& model, const ModelMatrices& matrices, int k) {
    return sigma_derivative(matrices, model.free_position(k));
}

Matrix sigma_derivative(const ModelMatrices& matrices, const PatternPosition& pos) {
    const auto p = matrices.lambda.rows();
    Matrix d = Matrix::Zero(p, p);
    switch (pos.matrix) {
        case MatrixKind::Lambda: {
            const Vector a = (matrices.lambda * matrices.phi).col(pos.col);
            d.row(pos.row) += a.transpose();
            d.col(pos.row) += a;
            break;
        }
        case MatrixKind::Phi: {
            const Vector lj = matrices.lambda.col(pos.row);
            const Vector lk = matrices.lambda.col(pos.col);
            d = lj * lk.transpose();
            if (pos.row != pos.col) {
                d += lk * lj.transpose();
            }
            break;
        }
        case MatrixKind::Psi:
            d(pos.row, pos.col) = 1.0;
            d(pos.col, pos.row) = 1.0;
            break;
    }
    return d;
}

Vector vech(const Matrix& a) {
    const int p = static_cast<int>(a.rows());
    Vector out(moment_count(p));
    int idx = 0;
    for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) {
            out(idx++) = a(i, j);
        }
    }
    return out;
}

Matrix vech_jacobian(const CfaModel& model, const ParameterVector& theta) {
    const auto mats = unpack(model, theta);
    Matrix jac(moment_count(model.p()), model.q());
    for (int k = 0; k < model.q(); ++k) {
        jac.col(k) = vech(sigma_derivative(model, mats, k));
    }
    return jac;
}

Matrix duplication_matrix(int p) {
    Matrix d = Matrix::Zero(p * p, moment_count(p));
    int idx = 0;
    for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) {
            d(j * p + i, idx) = 1.0;
            d(i * p + j, idx) = 1.0;
            ++idx;
        }
    }
    return d;
}

CfaModel simple_structure_model(int factors, int indicators) {
    const int p = factors * indicators;
    PatternGrid lambda(p, factors, false);
    PatternGrid phi(factors, factors, true, FixedValue{1.0});
    PatternGrid psi(p, p, true);
    int next = 0;
    for (int i = 0; i < p; ++i) {
        lambda.at(i, i / indicators) = FreeParam{next++, std::nullopt};
    }
    for (int j = 0; j < factors; ++j) {
        for (int k = 0; k < j; ++k) {
            phi.at(j, k) = FreeParam{next++, std::nullopt};
        }
    }
    for (int i = 0; i < p; ++i) {
        psi.at(i, i) = FreeParam{next++, std::nullopt};
    }
    return CfaModel(std::move(lambda), std::move(phi), std::move(psi));
}

CfaModel independence_model(int p) {
    PatternGrid psi(p, p, true);
    for (int i = 0; i < p; ++i) {
        psi.at(i, i) = FreeParam{i, std::nullopt};
    }
    return CfaModel(PatternGrid(p, 0, false), PatternGrid(0, 0, true), std::move(psi));
}

CfaModel saturated_model(int p) {
    PatternGrid psi(p, p, true);
    int next = 0;
    for (int j = 0; j < p; ++j) {
        for (int i = j; i < p; ++i) {
            psi.at(i, j) = FreeParam{next++, std::nullopt};
        }
    }
    return CfaModel(PatternGrid(p, 0, false), PatternGrid(0, 0, true), std::move(psi));
}

PopulationModel population_model() {
    constexpr int kFactors = 3;
    constexpr int kIndicators = 5;
    constexpr double kLoading = 0.70;
    constexpr double kFactorCorrelation = 0.30;

    CfaModel model = simple_structure_model(kFactors, kIndicators);
    const int p = model.p();
    ModelMatrices mats{Matrix::Zero(p, kFactors), Matrix::Constant(kFactors, kFactors, kFactorCorrelation),
                       Matrix::Zero(p, p)};
    mats.phi.diagonal().setOnes();
    for (int i = 0; i < p; ++i) {
        mats.lambda(i, i / kIndicators) = kLoading;
    }
    const Matrix common = mats.lambda * mats.phi * mats.lambda.transpose();
    for (int i = 0; i < p; ++i) {
        mats.psi(i, i) = 1.0 - common(i, i);
    }
    ParameterVector theta = pack(model, mats);
    return PopulationModel{std::move(model), std::move(theta)};
}

}  // namespace semfit
