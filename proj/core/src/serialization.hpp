#pragma once
#include <Eigen/Core>

#include <cereal/cereal.hpp>
#include <cereal/types/optional.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>

namespace cereal {

template <class Archive, class Scalar, int R, int C, int O, int MR, int MC>
void save(Archive& ar, const Eigen::Matrix<Scalar, R, C, O, MR, MC>& m)
{
    const std::int64_t rows = m.rows();
    const std::int64_t cols = m.cols();
    ar(rows, cols);
    ar(binary_data(m.data(), static_cast<std::size_t>(m.size()) * sizeof(Scalar)));
}

template <class Archive, class Scalar, int R, int C, int O, int MR, int MC>
void load(Archive& ar, Eigen::Matrix<Scalar, R, C, O, MR, MC>& m)
{
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    ar(rows, cols);
    m.resize(rows, cols);
    ar(binary_data(m.data(), static_cast<std::size_t>(m.size()) * sizeof(Scalar)));
}

} // namespace cereal
