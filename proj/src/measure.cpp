#include "mvrds/measure.hpp"

#include <cmath>
#include <fmt/format.h>
#include <istream>
#include <ostream>
#include <sstream>

namespace mvrds {

EmpiricalMeasure::EmpiricalMeasure(Mat atoms, Vec weights) : x_(std::move(atoms)), w_(std::move(weights)) {
    if (x_.cols() < 1 || x_.rows() < 1) throw DomainError("empirical measure needs at least one atom");
    if (w_.size() != x_.cols()) throw DomainError("weights and atoms differ in count");
    if ((w_.array() < 0.0).any()) throw DomainError("negative weight");
    if (std::abs(w_.sum() - 1.0) > 1e-12) throw DomainError(fmt::format("weights sum to {:.17g}, not 1", w_.sum()));
    if (!x_.allFinite()) throw DomainError("non-finite atom");
    const double u = 1.0 / static_cast<double>(w_.size());
    uniform_ = ((w_.array() - u).abs() <= 1e-15).all();
}

EmpiricalMeasure EmpiricalMeasure::uniform(Mat atoms) {
    const long n = atoms.cols();
    if (n < 1) throw DomainError("empirical measure needs at least one atom");
    return EmpiricalMeasure(std::move(atoms), Vec::Constant(n, 1.0 / static_cast<double>(n)));
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Vec& x) { return EmpiricalMeasure(x, Vec::Ones(1)); }

Vec EmpiricalMeasure::mean() const { return x_ * w_; }

Mat EmpiricalMeasure::covariance() const {
    const Mat c = x_.colwise() - mean();
    return c * w_.asDiagonal() * c.transpose();
}

double EmpiricalMeasure::integrate(const std::function<double(const Vec&)>& f) const {
    double s = 0.0;
    Vec y(x_.rows());
    if (uniform_) {
        // Sum then divide: constants integrate exactly.
        for (long i = 0; i < x_.cols(); ++i) {
            y = x_.col(i);
            s += f(y);
        }
        return s / static_cast<double>(x_.cols());
    }
    for (long i = 0; i < x_.cols(); ++i) {
        y = x_.col(i);
        s += w_(i) * f(y);
    }
    return s;
}

EmpiricalMeasure EmpiricalMeasure::translated(const Vec& v) const {
    Mat x = x_;
    x.colwise() += v;
    return EmpiricalMeasure(std::move(x), w_);
}

EmpiricalMeasure EmpiricalMeasure::dilated(double lambda) const { return EmpiricalMeasure(lambda * x_, w_); }

double moment(const EmpiricalMeasure& mu, double p) {
    if (!(p >= 1.0)) throw DomainError("moment order must be at least 1");
    double s = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) s += mu.weight(i) * std::pow(mu.atom(i).norm(), p);
    return s;
}

void write_measure(std::ostream& os, const EmpiricalMeasure& mu) {
    os << fmt::format("# mvrds-measure 1\n# d={} n={}\n", mu.dim(), mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        os << fmt::format("{:.17g}", mu.weight(i));
        for (int r = 0; r < mu.dim(); ++r) os << fmt::format(" {:.17g}", mu.atom(i)(r));
        os << '\n';
    }
}

EmpiricalMeasure read_measure(std::istream& is) {
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) row.push_back(std::strtod(tok.c_str(), nullptr));
        if (!rows.empty() && row.size() != rows.front().size()) throw std::runtime_error("ragged measure file");
        if (row.size() < 2) throw std::runtime_error("measure row needs a weight and coordinates");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty measure file");
    const long d = static_cast<long>(rows.front().size()) - 1;
    const long n = static_cast<long>(rows.size());
    Mat x(d, n);
    Vec w(n);
    for (long i = 0; i < n; ++i) {
        w(i) = rows[static_cast<std::size_t>(i)][0];
        for (long r = 0; r < d; ++r) x(r, i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(r + 1)];
    }
    return EmpiricalMeasure(std::move(x), std::move(w));
}

}  // namespace mvrds
