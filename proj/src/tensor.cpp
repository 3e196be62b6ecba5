#include "cat/tensor.hpp"

#include <charconv>
#include <sstream>

namespace cat {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != data_.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape_) + " needs " +
                             std::to_string(shape_product(shape_)) + " values, got " +
                             std::to_string(data_.size()));
    }
}

Tensor Tensor::row(std::initializer_list<double> v) {
    return Tensor({v.size()}, std::vector<double>(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& rr : rows) {
        if (rr.size() != c) throw DimensionError("tensor: ragged matrix initializer");
        data.insert(data.end(), rr.begin(), rr.end());
    }
    return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("tensor: rows() on rank-" + std::to_string(rank()));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("tensor: cols() on rank-" + std::to_string(rank()));
    return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double* Tensor::row_ptr(std::size_t r) { return data_.data() + r * cols(); }
const double* Tensor::row_ptr(std::size_t r) const { return data_.data() + r * cols(); }

Tensor Tensor::row_copy(std::size_t r) const {
    std::size_t c = cols();
    return Tensor({c}, std::vector<double>(data_.begin() + r * c, data_.begin() + (r + 1) * c));
}

bool Tensor::finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::string format_f64(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw InternalError("format_f64: to_chars failed");
    return std::string(buf, p);
}

double parse_f64(std::string_view s, const std::string& where) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw DataError("bad number '" + std::string(s) + "' in " + where);
    return v;
}

}  // namespace cat
