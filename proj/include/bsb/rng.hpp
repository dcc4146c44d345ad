#ifndef BSB_RNG_HPP
#define BSB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace bsb {

/// mt19937_64 plus a hand-rolled Box-Muller so streams are identical across
/// standard libraries for a given seed.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u = uniform();
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u));
        const double a = 2.0 * M_PI * v;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

  private:
    std::mt19937_64 engine_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace bsb

#endif
