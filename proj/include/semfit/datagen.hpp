#pragma once

#include "semfit/estimation.hpp"
#include "semfit/model.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace semfit {

/// xoshiro256** generator seeded through SplitMix64. Streams are addressed by
/// grid coordinates so every replication can be regenerated independently.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    /// Substream for (master_seed, scenario, N index, replication).
    [[nodiscard]] static RngStream for_coordinates(std::uint64_t master_seed, std::uint64_t scenario,
                                                   std::uint64_t n_index, std::uint64_t replication);

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Standard normal via the Marsaglia polar method (pairs are cached).
    double normal();
    /// Chi-square with integer df as a sum of squared normals.
    double chi_square(int df);

private:
    std::array<std::uint64_t, 4> state_{};
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

enum class Distribution { Normal, Elliptical };

/// Data-generating factor model X = Lambda xi + eps.
struct PopulationSpec {
    Matrix lambda;
    Matrix phi;
    Matrix psi;
    Distribution distribution = Distribution::Normal;
    // Elliptical radius r = sqrt(scale / chi2(df)); E[r^2] = scale / (df - 2).
    int elliptical_df = 5;
    double elliptical_scale = 3.0;

    [[nodiscard]] int p() const noexcept { return static_cast<int>(lambda.rows()); }
    [[nodiscard]] Matrix sigma() const;

    [[nodiscard]] static PopulationSpec from_matrices(const ModelMatrices& mats,
                                                      Distribution distribution = Distribution::Normal);
};

/// Lower-triangular L with L L' = A (Cholesky).
[[nodiscard]] Matrix matrix_sqrt_factor(const Matrix& a);

/// N x p sample. In elliptical mode a single radius per observation scales
/// both its factor scores and its unique errors.
[[nodiscard]] Matrix generate_sample(const PopulationSpec& spec, int n, RngStream& rng);

/// Unbiased (divisor N - 1) covariance; keeps the data in the result.
[[nodiscard]] SampleMoments sample_covariance(const Matrix& data);

/// CSV with a header row. Numbers use shortest round-trip formatting.
void write_csv(std::ostream& out, const std::vector<std::string>& names, const Matrix& data);

struct CsvData {
    std::vector<std::string> names;
    Matrix values;
};

/// Reads a numeric CSV with a header row; throws std::runtime_error with the
/// offending line number on malformed input.
[[nodiscard]] CsvData read_csv(std::istream& in);

/// Shortest decimal string that parses back to the same double.
[[nodiscard]] std::string format_double(double value);

}  // namespace semfit
