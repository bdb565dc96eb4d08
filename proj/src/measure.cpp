#include "filterlab/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "filterlab/csv.hpp"
#include "filterlab/errors.hpp"
#include "filterlab/reduce.hpp"

namespace filterlab {

namespace {
const double kLogHigh = std::log(1e250);
const double kLogLow = std::log(1e-250);
}  // namespace

WeightedEnsemble::WeightedEnsemble(std::size_t d, std::vector<double> points, std::vector<double> weights,
                                   double timestamp)
    : d_(d), points_(std::move(points)), weights_(std::move(weights)), timestamp_(timestamp) {
    if (d_ == 0 || points_.size() != weights_.size() * d_)
        throw InvalidInputError("ensemble points and weights disagree in size");
    for (double w : weights_)
        if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInputError("ensemble weights must be finite and nonnegative");
}

WeightedEnsemble WeightedEnsemble::from_log_weights(std::size_t d, std::vector<double> points,
                                                    std::span<const double> log_weights, double timestamp) {
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (double lw : log_weights) {
        if (std::isnan(lw) || lw == std::numeric_limits<double>::infinity())
            throw InvalidInputError("log weight is not finite");
        if (lw == -std::numeric_limits<double>::infinity()) continue;
        hi = std::max(hi, lw);
        lo = std::min(lo, lw);
    }
    double shift = 0.0;
    if (std::isfinite(hi) && (hi > kLogHigh || lo < kLogLow)) shift = hi;
    std::vector<double> w(log_weights.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - shift);
    WeightedEnsemble e(d, std::move(points), std::move(w), timestamp);
    e.log_scale_ = shift;
    return e;
}

double WeightedEnsemble::weight(std::size_t i) const {
    return log_scale_ == 0.0 ? weights_[i] : weights_[i] * std::exp(log_scale_);
}

double WeightedEnsemble::mass() const {
    const double m = pairwise_sum(weights_);
    return log_scale_ == 0.0 ? m : m * std::exp(log_scale_);
}

WeightedEnsemble WeightedEnsemble::scaled(double c) const {
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidInputError("ensemble scale factor must be positive");
    WeightedEnsemble e = *this;
    for (double& w : e.weights_) w *= c;
    e.normalized_ = false;
    return e;
}

double integrate_values(const WeightedEnsemble& mu, std::span<const double> values) {
    if (values.size() != mu.size()) throw InvalidInputError("value count does not match ensemble size");
    const auto w = mu.stored_weights();
    double s = block_reduce(w.size(), [&](std::size_t i) { return w[i] * values[i]; });
    if (!std::isfinite(s)) throw InvalidInputError("non-finite integrand in ensemble pairing");
    return mu.log_scale() == 0.0 ? s : s * std::exp(mu.log_scale());
}

double integrate(const WeightedEnsemble& mu, const TestFunction& phi) {
    const auto w = mu.stored_weights();
    double s = block_reduce(w.size(), [&](std::size_t i) { return w[i] * phi.value(mu.point(i)); });
    if (!std::isfinite(s)) throw InvalidInputError("non-finite test function value for '" + phi.name + "'");
    return mu.log_scale() == 0.0 ? s : s * std::exp(mu.log_scale());
}

WeightedEnsemble normalize(const WeightedEnsemble& mu) {
    if (mu.normalized_) return mu;
    const double m = pairwise_sum(mu.weights_);
    if (!(m > 0.0) || !std::isfinite(m)) throw DegenerateMeasureError("cannot normalise a measure with zero mass");
    WeightedEnsemble e = mu;
    e.normalized_ = true;
    if (m == 1.0 && mu.log_scale_ == 0.0) return e;
    for (double& w : e.weights_) w /= m;
    e.log_scale_ = 0.0;
    return e;
}

double effective_sample_size(const WeightedEnsemble& mu) {
    const auto w = mu.stored_weights();
    const double s1 = pairwise_sum(w);
    const double s2 = block_reduce(w.size(), [&](std::size_t i) { return w[i] * w[i]; });
    if (!(s1 > 0.0)) throw DegenerateMeasureError("effective sample size of a zero measure");
    return s1 * s1 / s2;
}

void write_ensemble_csv(const WeightedEnsemble& mu, const std::filesystem::path& file) {
    std::vector<std::string> header;
    for (std::size_t i = 0; i < mu.dim(); ++i) header.push_back("x_" + std::to_string(i + 1));
    header.push_back("weight");
    CsvWriter w(file, header);
    std::vector<double> row(mu.dim() + 1);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto p = mu.point(i);
        std::copy(p.begin(), p.end(), row.begin());
        row.back() = mu.weight(i);
        w.row(row);
    }
}

}  // namespace filterlab
