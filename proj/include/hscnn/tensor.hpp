#pragma once

#include "hscnn/common.hpp"

#include <initializer_list>
#include <string>
#include <vector>

namespace hscnn {

using Shape = std::vector<Index>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array with an explicit shape (last extent fastest).
///
/// Activations follow the (batch, channels, depth, height, width) convention;
/// dense-layer activations are (batch, features), which is the same memory as
/// a column-major (features x batch) matrix, see as_matrix().
template <typename Scalar>
class Tensor {
public:
    using Storage = Vector<Scalar>;

    Tensor() = default;
    explicit Tensor(Shape shape, Scalar fill = Scalar(0));
    Tensor(Shape shape, Storage data);

    const Shape& shape() const { return shape_; }
    Index rank() const { return static_cast<Index>(shape_.size()); }
    Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    Index size() const { return data_.size(); }
    bool empty() const { return data_.size() == 0; }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Storage& flat() { return data_; }
    const Storage& flat() const { return data_; }

    Scalar& operator[](Index i) { return data_[i]; }
    Scalar operator[](Index i) const { return data_[i]; }

    Scalar& at(std::initializer_list<Index> idx) { return data_[offset(idx)]; }
    Scalar at(std::initializer_list<Index> idx) const { return data_[offset(idx)]; }

    Index offset(std::initializer_list<Index> idx) const;

    /// Elements per step of the leading extent.
    Index slice_size() const { return rank() == 0 ? 0 : size() / shape_.front(); }

    /// View the (leading, rest) tensor as a column-major (rest x leading) matrix.
    Eigen::Map<Matrix<Scalar>> as_matrix() { return {data(), slice_size(), shape_.front()}; }
    Eigen::Map<const Matrix<Scalar>> as_matrix() const { return {data(), slice_size(), shape_.front()}; }

    /// Reinterpret with a new shape of identical element count.
    Tensor reshaped(Shape shape) const;

    /// Copy of the contiguous block for leading index `i`, keeping trailing extents.
    Tensor slice(Index i) const;
    void set_slice(Index i, const Tensor& block);

    bool all_finite() const { return data_.allFinite(); }

    template <typename Other>
    Tensor<Other> cast() const { return Tensor<Other>(shape_, data_.template cast<Other>()); }

    void set_zero() { data_.setZero(); }

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

private:
    Shape shape_;
    Storage data_;
};

/// Throws NumericError naming `what` when the tensor holds NaN or Inf.
template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* what);

/// Stacks equally shaped tensors along a new leading batch extent.
template <typename Scalar>
Tensor<Scalar> stack(const std::vector<const Tensor<Scalar>*>& items);

extern template class Tensor<float>;
extern template class Tensor<double>;

} // namespace hscnn
