#pragma once

#include "loopshift/errors.hpp"
#include "loopshift/types.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace loopshift {

// One condition class: a period (in frames) and one amplitude per harmonic.
struct ClassProfile {
    std::size_t period = 0;
    std::vector<double> amplitudes;
};

struct PeriodicSample {
    ConditionId condition;
    double phase = 0.0;
    Matrix frames;
};

// Synthetic cyclic sequences of length N. Frame i of a class-c sequence is
//   [a_h sin(2 pi h (i/P_c + phi)), a_h cos(2 pi h (i/P_c + phi))]  for h = 1..D/2
// with a per-sample random phase phi.
class PeriodicDataset {
public:
    PeriodicDataset(std::size_t cycle_length, std::size_t dim, std::vector<ClassProfile> classes)
        : cycle_length_(cycle_length), dim_(dim), classes_(std::move(classes)) {
        if (cycle_length_ < 4) {
            throw ConfigError("periodic dataset: cycle length must be >= 4");
        }
        if (dim_ < 2 || dim_ % 2 != 0) {
            throw ConfigError("periodic dataset: frame dimension must be even and >= 2");
        }
        if (classes_.empty()) {
            throw ConfigError("periodic dataset: need at least one class");
        }
        for (std::size_t c = 0; c < classes_.size(); ++c) {
            const ClassProfile& profile = classes_[c];
            if (profile.period == 0 || cycle_length_ % profile.period != 0) {
                throw ConfigError("periodic dataset: period of class " + std::to_string(c) +
                                  " does not divide the cycle length");
            }
            if (profile.amplitudes.size() != dim_ / 2) {
                throw ConfigError("periodic dataset: class " + std::to_string(c) + " needs one amplitude per harmonic");
            }
        }
    }

    std::size_t cycle_length() const { return cycle_length_; }
    std::size_t dim() const { return dim_; }
    std::size_t classes() const { return classes_.size(); }
    const ClassProfile& profile(ConditionId c) const { return classes_.at(c.value); }

    // Frames start, start+1, ..., start+count-1 of the sequence. The frame
    // index enters only modulo the period, so x[i] == x[i + N] bit-exactly.
    Matrix frames(ConditionId c, double phase, std::size_t start, std::size_t count) const {
        const ClassProfile& profile = classes_.at(c.value);
        Matrix out(static_cast<long>(count), static_cast<long>(dim_));
        for (std::size_t row = 0; row < count; ++row) {
            const std::size_t i = (start + row) % profile.period;
            const double cycle_pos = static_cast<double>(i) / static_cast<double>(profile.period) + phase;
            for (std::size_t h = 1; h <= dim_ / 2; ++h) {
                const double angle = 2.0 * std::numbers::pi * static_cast<double>(h) * cycle_pos;
                const double amp = profile.amplitudes[h - 1];
                out(static_cast<long>(row), static_cast<long>(2 * (h - 1))) = amp * std::sin(angle);
                out(static_cast<long>(row), static_cast<long>(2 * (h - 1) + 1)) = amp * std::cos(angle);
            }
        }
        return out;
    }

    Matrix sequence(ConditionId c, double phase) const { return frames(c, phase, 0, cycle_length_); }

    template <typename Rng>
    PeriodicSample sample(Rng& rng) const {
        std::uniform_int_distribution<std::uint32_t> pick_class(0, static_cast<std::uint32_t>(classes_.size() - 1));
        std::uniform_real_distribution<double> pick_phase(0.0, 1.0);
        PeriodicSample s;
        s.condition = ConditionId{pick_class(rng)};
        s.phase = pick_phase(rng);
        s.frames = sequence(s.condition, s.phase);
        return s;
    }

private:
    std::size_t cycle_length_;
    std::size_t dim_;
    std::vector<ClassProfile> classes_;
};

// Default class table: even classes use period N, odd classes N/2 (when N is
// even). The first harmonic has amplitude 1; higher harmonics draw from
// U[0, 0.5] with the given seed.
inline PeriodicDataset make_periodic_dataset(std::size_t classes, std::size_t N, std::size_t D, std::uint64_t seed) {
    if (classes < 1) {
        throw ConfigError("periodic dataset: need at least one class");
    }
    if (N < 4 || D < 2) {
        throw ConfigError("periodic dataset: need N >= 4 and D >= 2");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> amp(0.0, 0.5);
    std::vector<ClassProfile> table;
    table.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        ClassProfile profile;
        profile.period = (c % 2 == 1 && N % 2 == 0) ? N / 2 : N;
        profile.amplitudes.resize(D / 2);
        for (std::size_t h = 0; h < D / 2; ++h) {
            profile.amplitudes[h] = (h == 0) ? 1.0 : amp(rng);
        }
        table.push_back(std::move(profile));
    }
    return PeriodicDataset(N, D, std::move(table));
}

} // namespace loopshift
