#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace semfit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Which parameter matrix of the factor model an entry belongs to.
enum class MatrixKind { Lambda, Phi, Psi };

[[nodiscard]] const char* to_string(MatrixKind kind) noexcept;

/// A cell of one of the parameter matrices. For the symmetric Phi and Psi
/// grids positions are normalized so that row >= col.
struct PatternPosition {
    MatrixKind matrix = MatrixKind::Lambda;
    int row = 0;
    int col = 0;

    [[nodiscard]] static PatternPosition make(MatrixKind matrix, int row, int col);
    friend bool operator==(const PatternPosition&, const PatternPosition&) = default;
};

[[nodiscard]] std::string to_string(const PatternPosition& pos);

struct FixedValue {
    double value = 0.0;
};

struct FreeParam {
    int index = 0;
    std::optional<double> start;
};

using ParamEntry = std::variant<FixedValue, FreeParam>;

[[nodiscard]] inline bool is_free(const ParamEntry& e) noexcept { return std::holds_alternative<FreeParam>(e); }

/// Rectangular or symmetric grid of ParamEntry. A symmetric grid stores one
/// entry per unordered pair, so (i, j) and (j, i) always alias.
class PatternGrid {
public:
    PatternGrid() = default;
    PatternGrid(int rows, int cols, bool symmetric, ParamEntry fill = FixedValue{0.0});

    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] int cols() const noexcept { return cols_; }
    [[nodiscard]] bool symmetric() const noexcept { return symmetric_; }

    [[nodiscard]] const ParamEntry& at(int r, int c) const;
    ParamEntry& at(int r, int c);

private:
    [[nodiscard]] std::size_t offset(int r, int c) const;

    int rows_ = 0;
    int cols_ = 0;
    bool symmetric_ = false;
    std::vector<ParamEntry> cells_;
};

/// Free-parameter vector theta, ordered by FreeParam::index.
struct ParameterVector {
    Vector values;

    ParameterVector() = default;
    explicit ParameterVector(Vector v) : values(std::move(v)) {}

    [[nodiscard]] int size() const noexcept { return static_cast<int>(values.size()); }
    double operator[](int k) const { return values(k); }
    double& operator[](int k) { return values(k); }
};

struct ModelMatrices {
    Matrix lambda;  // p x m
    Matrix phi;     // m x m
    Matrix psi;     // p x p
};

/// Confirmatory factor model Sigma = Lambda Phi Lambda' + Psi with a
/// free/fixed pattern on each matrix. Immutable once constructed.
class CfaModel {
public:
    /// Validates symmetry, contiguous free indices, identification and q <= p*.
    CfaModel(PatternGrid lambda, PatternGrid phi, PatternGrid psi,
             std::vector<std::string> observed = {}, std::vector<std::string> factors = {});

    [[nodiscard]] int p() const noexcept { return lambda_.rows(); }
    [[nodiscard]] int m() const noexcept { return lambda_.cols(); }
    [[nodiscard]] int q() const noexcept { return static_cast<int>(free_.size()); }

    [[nodiscard]] const PatternGrid& lambda_pattern() const noexcept { return lambda_; }
    [[nodiscard]] const PatternGrid& phi_pattern() const noexcept { return phi_; }
    [[nodiscard]] const PatternGrid& psi_pattern() const noexcept { return psi_; }
    [[nodiscard]] const ParamEntry& entry(const PatternPosition& pos) const;

    /// Position of free parameter k.
    [[nodiscard]] const PatternPosition& free_position(int k) const { return free_.at(static_cast<std::size_t>(k)); }
    [[nodiscard]] const std::vector<PatternPosition>& free_positions() const noexcept { return free_; }
    [[nodiscard]] std::optional<int> free_index_of(const PatternPosition& pos) const;

    [[nodiscard]] const std::vector<std::string>& observed_names() const noexcept { return observed_; }
    [[nodiscard]] const std::vector<std::string>& factor_names() const noexcept { return factors_; }

    /// Copy of this model with a currently fixed position made free (index q,
    /// start at its former fixed value).
    [[nodiscard]] CfaModel with_freed(const PatternPosition& pos) const;

private:
    PatternGrid lambda_;
    PatternGrid phi_;
    PatternGrid psi_;
    std::vector<std::string> observed_;
    std::vector<std::string> factors_;
    std::vector<PatternPosition> free_;
};

[[nodiscard]] inline int moment_count(int p) noexcept { return p * (p + 1) / 2; }

[[nodiscard]] ModelMatrices unpack(const CfaModel& model, const ParameterVector& theta);
[[nodiscard]] ParameterVector pack(const CfaModel& model, const ModelMatrices& matrices);

[[nodiscard]] Matrix implied_covariance(const ModelMatrices& matrices);
[[nodiscard]] Matrix implied_covariance(const CfaModel& model, const ParameterVector& theta);

/// p(p+1)/2 - q; throws OverParameterizedError when negative.
[[nodiscard]] int degrees_of_freedom(const CfaModel& model);

/// For a symmetric p x p matrix M, returns the q-vector with entries
/// tr(M dSigma/dtheta_k) at the given matrices.
[[nodiscard]] Vector contract_sigma_derivatives(const CfaModel& model, const ModelMatrices& matrices, const Matrix& m);

/// dSigma/dtheta_k as a dense p x p matrix.
[[nodiscard]] Matrix sigma_derivative(const CfaModel& model, const ModelMatrices& matrices, int k);

/// Derivative of Sigma with respect to the cell at `pos`, free or not.
[[nodiscard]] Matrix sigma_derivative(const ModelMatrices& matrices, const PatternPosition& pos);

/// Jacobian d vech(Sigma) / d theta' (p* x q).
[[nodiscard]] Matrix vech_jacobian(const CfaModel& model, const ParameterVector& theta);

/// Column-major lower-triangle half-vectorization.
[[nodiscard]] Vector vech(const Matrix& a);

/// Duplication matrix D_p with vec(A) = D vech(A) for symmetric A.
[[nodiscard]] Matrix duplication_matrix(int p);

/// Simple-structure model: `indicators` per factor, unit factor variances,
/// free factor correlations, free loadings, free diagonal unique variances.
[[nodiscard]] CfaModel simple_structure_model(int factors, int indicators);

/// Baseline model with free variances and all covariances fixed at zero.
[[nodiscard]] CfaModel independence_model(int p);

/// Model whose unique covariance matrix is fully free (q = p*).
[[nodiscard]] CfaModel saturated_model(int p);

struct PopulationModel {
    CfaModel model;
    ParameterVector theta;
};

/// Three factors with five indicators each: loadings 0.70, factor
/// correlations 0.30, unique variances chosen for unit observed variances.
[[nodiscard]] PopulationModel population_model();

}  // namespace semfit
