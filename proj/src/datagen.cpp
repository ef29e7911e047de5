#include "semfit/datagen.hpp"

#include "semfit/errors.hpp"

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace semfit {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t mix(std::uint64_t value) {
    std::uint64_t s = value;
    return splitmix64(s);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

RngStream RngStream::for_coordinates(std::uint64_t master_seed, std::uint64_t scenario, std::uint64_t n_index,
                                     std::uint64_t replication) {
    std::uint64_t h = mix(master_seed);
    h = mix(h ^ scenario);
    h = mix(h ^ n_index);
    h = mix(h ^ replication);
    return RngStream(h);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    cached_normal_ = v * scale;
    has_cached_ = true;
    return u * scale;
}

double RngStream::chi_square(int df) {
    double sum = 0.0;
    for (int i = 0; i < df; ++i) {
        const double z = normal();
        sum += z * z;
    }
    return sum;
}

Matrix PopulationSpec::sigma() const {
    return implied_covariance(ModelMatrices{lambda, phi, psi});
}

PopulationSpec PopulationSpec::from_matrices(const ModelMatrices& mats, Distribution distribution) {
    PopulationSpec spec;
    spec.lambda = mats.lambda;
    spec.phi = mats.phi;
    spec.psi = mats.psi;
    spec.distribution = distribution;
    return spec;
}

Matrix matrix_sqrt_factor(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DimensionError("matrix_sqrt_factor requires a square matrix");
    }
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
        throw SingularMatrixError("A", "matrix is not positive definite");
    }
    return llt.matrixL();
}

Matrix generate_sample(const PopulationSpec& spec, int n, RngStream& rng) {
    if (n < 1) {
        throw std::invalid_argument("sample size must be positive");
    }
    const int p = spec.p();
    const int m = static_cast<int>(spec.lambda.cols());
    const Matrix l_phi = m > 0 ? matrix_sqrt_factor(spec.phi) : Matrix(0, 0);
    const Matrix l_psi = matrix_sqrt_factor(spec.psi);

    Matrix data(n, p);
    Vector z_xi(m);
    Vector z_eps(p);
    for (int i = 0; i < n; ++i) {
        double r = 1.0;
        if (spec.distribution == Distribution::Elliptical) {
            r = std::sqrt(spec.elliptical_scale / rng.chi_square(spec.elliptical_df));
        }
        for (int j = 0; j < m; ++j) {
            z_xi(j) = rng.normal();
        }
        for (int j = 0; j < p; ++j) {
            z_eps(j) = rng.normal();
        }
        const Vector xi = r * (l_phi * z_xi);
        const Vector eps = r * (l_psi * z_eps);
        data.row(i) = (spec.lambda * xi + eps).transpose();
    }
    return data;
}

SampleMoments sample_covariance(const Matrix& data) {
    const auto n = data.rows();
    if (n < 2) {
        throw std::invalid_argument("sample covariance needs at least two observations");
    }
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Matrix centered = data.rowwise() - mean;
    Matrix s = (centered.transpose() * centered) / static_cast<double>(n - 1);
    s.triangularView<Eigen::StrictlyUpper>() = s.transpose().triangularView<Eigen::StrictlyUpper>();
    return SampleMoments{std::move(s), static_cast<int>(n), data};
}

std::string format_double(double value) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

void write_csv(std::ostream& out, const std::vector<std::string>& names, const Matrix& data) {
    if (static_cast<Eigen::Index>(names.size()) != data.cols()) {
        throw DimensionError("CSV header does not match column count");
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
        out << (j ? "," : "") << names[j];
    }
    out << '\n';
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            out << (j ? "," : "") << format_double(data(i, j));
        }
        out << '\n';
    }
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto first = field.find_first_not_of(" \t\r");
        const auto last = field.find_last_not_of(" \t\r");
        out.push_back(first == std::string::npos ? std::string() : field.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

}  // namespace

CsvData read_csv(std::istream& in) {
    CsvData csv;
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("CSV is empty");
    }
    csv.names = split_fields(line);
    if (csv.names.empty()) {
        throw std::runtime_error("CSV header is empty");
    }
    std::vector<std::vector<double>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != csv.names.size()) {
            throw std::runtime_error("CSV line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                     " fields, expected " + std::to_string(csv.names.size()));
        }
        std::vector<double> row(fields.size());
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const auto& f = fields[j];
            const auto res = std::from_chars(f.data(), f.data() + f.size(), row[j]);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
                throw std::runtime_error("CSV line " + std::to_string(line_no) + ", column '" + csv.names[j] +
                                         "': not a number: '" + f + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    csv.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(csv.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            csv.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return csv;
}

}  // namespace semfit
