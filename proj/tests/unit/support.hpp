#pragma once

// Shared oracles for the unit tests: instance generation from the standard
// library engine, central differences and naive reference kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "memvi/generative.hpp"
#include "memvi/memory.hpp"
#include "memvi/numerics.hpp"

namespace support {

using memvi::Activation;
using memvi::Layer;
using memvi::LayerStack;
using memvi::Matrix;
using memvi::MemoryMatrix;
using memvi::Vector;

class Gen {
public:
    explicit Gen(std::uint64_t seed) : eng_(seed) {}
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_); }
    Vector vec(std::size_t d, double scale = 1.0) {
        Vector v(d);
        for (auto& x : v) x = scale * normal();
        return v;
    }
    Matrix mat(std::size_t r, std::size_t c, double scale = 1.0) {
        Matrix m(r, c);
        for (auto& x : m.data()) x = scale * normal();
        return m;
    }
    MemoryMatrix memory(std::size_t d, std::size_t n, double scale = 1.0) {
        std::vector<Vector> cols;
        for (std::size_t k = 0; k < n; ++k) cols.push_back(vec(d, scale));
        return MemoryMatrix::from_patterns(cols);
    }
    Layer layer(std::size_t in, std::size_t out, Activation act) {
        return Layer{mat(out, in, 1.0 / std::sqrt(static_cast<double>(in))), vec(out, 0.3), act};
    }
    Activation activation() {
        static const Activation all[] = {Activation::identity, Activation::tanh, Activation::relu};
        return all[index(0, 2)];
    }
    // dims[0] is the observation; dims.back() the latent.
    LayerStack stack(const std::vector<std::size_t>& dims) {
        std::vector<Layer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) layers.push_back(layer(dims[l + 1], dims[l], activation()));
        return LayerStack(std::move(layers));
    }

private:
    std::mt19937_64 eng_;
};

inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-5) {
    Vector g(x.dim());
    for (std::size_t i = 0; i < x.dim(); ++i) {
        Vector a = x, b = x;
        a[i] += h;
        b[i] -= h;
        g[i] = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

inline double rel_err(const Vector& a, const Vector& b) {
    return memvi::distance(a, b) / std::max({memvi::norm(a), memvi::norm(b), 1e-8});
}

// log(sum exp) in long double, no shifting; fine for the moderate values used.
inline double naive_lse(const std::vector<double>& v) {
    long double s = 0;
    for (double x : v) s += std::exp(static_cast<long double>(x));
    return static_cast<double>(std::log(s));
}

inline double naive_log_prior_balanced(const Vector& z, const MemoryMatrix& m, double sigma) {
    std::vector<double> q;
    for (std::size_t k = 0; k < m.size(); ++k) {
        double s = 0;
        for (std::size_t i = 0; i < z.dim(); ++i) s += (z[i] - m.matrix()(i, k)) * (z[i] - m.matrix()(i, k));
        q.push_back(-s / (2 * sigma * sigma));
    }
    const double d = static_cast<double>(z.dim());
    return naive_lse(q) - std::log(static_cast<double>(m.size())) - 0.5 * d * std::log(2 * M_PI * sigma * sigma);
}

inline double max_abs(const Vector& a, const Vector& b) { return memvi::max_abs_difference(a, b); }

}  // namespace support
