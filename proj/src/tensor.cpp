#include "hscnn/tensor.hpp"

#include <sstream>

namespace hscnn {

namespace {
constexpr std::array<const char*, kTaskCount> kTaskNames = {
    "calcification", "margin", "subtlety", "texture", "sphericity", "malignancy"};
}

const char* task_name(Task task) { return kTaskNames.at(static_cast<std::size_t>(task)); }

Task task_from_name(std::string_view name)
{
    for (std::size_t i = 0; i < kTaskNames.size(); ++i)
        if (name == kTaskNames[i])
            return static_cast<Task>(i);
    throw ConfigError("unknown task name '" + std::string(name) + "'");
}

Index shape_size(const Shape& shape)
{
    Index n = 1;
    for (Index e : shape)
        n *= e;
    return n;
}

std::string shape_string(const Shape& shape)
{
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i)
        os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Scalar fill) : shape_(std::move(shape))
{
    for (Index e : shape_)
        if (e <= 0)
            throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    data_ = Storage::Constant(shape_size(shape_), fill);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data))
{
    for (Index e : shape_)
        if (e <= 0)
            throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    if (shape_size(shape_) != data_.size())
        throw ShapeError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " elements");
}

template <typename Scalar>
Index Tensor<Scalar>::offset(std::initializer_list<Index> idx) const
{
    if (static_cast<Index>(idx.size()) != rank())
        throw ShapeError("index rank mismatch for shape " + shape_string(shape_));
    Index off = 0;
    std::size_t axis = 0;
    for (Index i : idx) {
        if (i < 0 || i >= shape_[axis])
            throw ShapeError("index out of range for shape " + shape_string(shape_));
        off = off * shape_[axis] + i;
        ++axis;
    }
    return off;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), data_);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::slice(Index i) const
{
    const Index n = slice_size();
    Shape rest(shape_.begin() + 1, shape_.end());
    if (rest.empty())
        rest.push_back(1);
    return Tensor(std::move(rest), Storage(data_.segment(i * n, n)));
}

template <typename Scalar>
void Tensor<Scalar>::set_slice(Index i, const Tensor& block)
{
    const Index n = slice_size();
    if (block.size() != n)
        throw ShapeError("slice size mismatch");
    data_.segment(i * n, n) = block.flat();
}

template <typename Scalar>
void require_finite(const Tensor<Scalar>& t, const char* what)
{
    if (!t.all_finite())
        throw NumericError(std::string("non-finite values in ") + what);
}

template <typename Scalar>
Tensor<Scalar> stack(const std::vector<const Tensor<Scalar>*>& items)
{
    if (items.empty())
        throw ShapeError("cannot stack an empty list");
    const Shape& inner = items.front()->shape();
    Shape shape{static_cast<Index>(items.size())};
    shape.insert(shape.end(), inner.begin(), inner.end());
    Tensor<Scalar> out(shape);
    for (std::size_t b = 0; b < items.size(); ++b) {
        if (items[b]->shape() != inner)
            throw ShapeError("stack: inconsistent item shapes");
        out.set_slice(static_cast<Index>(b), *items[b]);
    }
    return out;
}

template class Tensor<float>;
template class Tensor<double>;
template void require_finite(const Tensor<float>&, const char*);
template void require_finite(const Tensor<double>&, const char*);
template Tensor<float> stack(const std::vector<const Tensor<float>*>&);
template Tensor<double> stack(const std::vector<const Tensor<double>*>&);

} // namespace hscnn
