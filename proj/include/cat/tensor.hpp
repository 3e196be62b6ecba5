#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cat {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands; message names the offending axes.
struct DimensionError : Error {
    using Error::Error;
};
// Invalid configuration value or combination.
struct ConfigError : Error {
    using Error::Error;
};
// Bad payload data (out-of-range label, unknown id, malformed file).
struct DataError : Error {
    using Error::Error;
};
// Mathematically degenerate input (zero-norm vector where a direction is needed).
struct DegenerateInputError : Error {
    using Error::Error;
};
// Caller violated a documented operation precondition.
struct PreconditionError : Error {
    using Error::Error;
};
// A verification oracle could not run (e.g. non-deterministic loss function).
struct OracleError : Error {
    using Error::Error;
};
// Invariant broken inside the library itself.
struct InternalError : Error {
    using Error::Error;
};

/// Dense row-major tensor of 64-bit floats. product(shape) == data.size() always.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }
    static Tensor row(std::initializer_list<double> v);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    double* row_ptr(std::size_t r);
    const double* row_ptr(std::size_t r) const;
    Tensor row_copy(std::size_t r) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool finite() const;
    void fill(double v);

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// shortest decimal form that round-trips the exact double (via to_chars)
std::string format_f64(double v);
double parse_f64(std::string_view s, const std::string& where);

}  // namespace cat
