#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "filterlab/model.hpp"

namespace filterlab {

// Finite measure sum_i w_i delta_{x_i}. Weights are stored as
// stored_weight[i] * exp(log_scale); log_scale stays 0 unless some weight
// would leave [1e-250, 1e250].
class WeightedEnsemble {
public:
    WeightedEnsemble() = default;
    WeightedEnsemble(std::size_t d, std::vector<double> points, std::vector<double> weights, double timestamp);

    // Weights exp(log_weights[i]) with the scale fallback applied.
    static WeightedEnsemble from_log_weights(std::size_t d, std::vector<double> points,
                                             std::span<const double> log_weights, double timestamp);

    std::size_t size() const { return weights_.size(); }
    std::size_t dim() const { return d_; }
    double timestamp() const { return timestamp_; }
    double log_scale() const { return log_scale_; }
    bool normalized() const { return normalized_; }

    std::span<const double> point(std::size_t i) const { return {points_.data() + i * d_, d_}; }
    std::span<const double> points() const { return points_; }
    std::span<const double> stored_weights() const { return weights_; }
    double weight(std::size_t i) const;

    double mass() const;

    // Multiplies every weight by c > 0 (used when rebuilding pi from a
    // normalised path and a mass process).
    WeightedEnsemble scaled(double c) const;

    friend WeightedEnsemble normalize(const WeightedEnsemble& mu);

private:
    std::size_t d_ = 1;
    std::vector<double> points_;
    std::vector<double> weights_;
    double log_scale_ = 0.0;
    double timestamp_ = 0.0;
    bool normalized_ = false;
};

// Masses over the time grid, e.g. pi_t(1) or the mass process j_t.
struct MassPath {
    std::vector<double> values;
};

double integrate(const WeightedEnsemble& mu, const TestFunction& phi);
// Sum_i w_i v_i for precomputed per-particle values, same summation tree as
// integrate.
double integrate_values(const WeightedEnsemble& mu, std::span<const double> values);
WeightedEnsemble normalize(const WeightedEnsemble& mu);
double effective_sample_size(const WeightedEnsemble& mu);

// CSV x_1..x_d, weight.
void write_ensemble_csv(const WeightedEnsemble& mu, const std::filesystem::path& file);

}  // namespace filterlab
