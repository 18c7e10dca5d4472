#pragma once

#include <random>
#include <vector>

#include "okp/tensor.hpp"
#include "oracles.hpp"

namespace testing_util {

template <typename T>
okp::BasicTensor<T> random_tensor(std::mt19937_64& gen, okp::Shape shape, double lo = -1.0, double hi = 1.0)
{
    const auto v = oracle::uniform_vector(gen, okp::shape_volume(shape), lo, hi);
    return okp::BasicTensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

template <typename T>
std::vector<double> to_doubles(const okp::BasicTensor<T>& t)
{
    return std::vector<double>(t.data().begin(), t.data().end());
}

template <typename T>
oracle::Array4 to_array4(const okp::BasicTensor<T>& t)
{
    return oracle::Array4{t.extent(0), t.extent(1), t.extent(2), t.extent(3), to_doubles(t)};
}

} // namespace testing_util
