#pragma once

#include <Eigen/Core>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hscnn {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values, divergence, undefined statistics.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input data: manifests, volumes, cached samples, model files.
class DataError : public Error {
public:
    using Error::Error;
};

enum class Mode { Train, Eval };

// Binary prediction tasks. The first five are the semantic heads in their
// canonical order; malignancy is always last.
enum class Task : int { Calcification = 0, Margin, Subtlety, Texture, Sphericity, Malignancy };

inline constexpr int kSemanticTaskCount = 5;
inline constexpr int kTaskCount = 6;

inline constexpr std::array<Task, kSemanticTaskCount> kSemanticTasks = {
    Task::Calcification, Task::Margin, Task::Subtlety, Task::Texture, Task::Sphericity};

inline constexpr std::array<Task, kTaskCount> kAllTasks = {
    Task::Calcification, Task::Margin, Task::Subtlety, Task::Texture, Task::Sphericity, Task::Malignancy};

const char* task_name(Task task);
Task task_from_name(std::string_view name);

inline constexpr int task_index(Task task) { return static_cast<int>(task); }

/// Binary labels indexed by task_index(); kMissingLabel marks an absent label.
using LabelSet = std::array<int, kTaskCount>;
inline constexpr int kMissingLabel = -1;

} // namespace hscnn
