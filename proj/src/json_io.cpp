#include "koopman/json_io.hpp"

#include <cmath>

namespace koopman {

Json to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json to_json(const Vec& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

double json_number(const Json& j, const std::string& path, ErrorCode code) {
    if (!j.is_number()) throw Error(code, path + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw Error(code, path + ": must be finite");
    return v;
}

Vec json_vec(const Json& j, const std::string& path, ErrorCode code) {
    if (!j.is_array()) throw Error(code, path + ": expected an array of numbers");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v(static_cast<Eigen::Index>(i)) = json_number(j[i], path + "[" + std::to_string(i) + "]", code);
    }
    return v;
}

Mat json_mat(const Json& j, const std::string& path, ErrorCode code) {
    if (!j.is_array()) throw Error(code, path + ": expected an array of rows");
    if (j.empty()) return Mat(0, 0);
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string row_path = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || j[i].size() != cols) throw Error(code, row_path + ": ragged or non-array row");
        for (std::size_t c = 0; c < cols; ++c) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                json_number(j[i][c], row_path + "[" + std::to_string(c) + "]", code);
        }
    }
    return m;
}

JsonReader::JsonReader(const Json& j, std::string path, ErrorCode code) : j_(&j), path_(std::move(path)), code_(code) {
    if (!j.is_object()) throw Error(code_, (path_.empty() ? std::string("document") : path_) + ": expected an object");
}

std::string JsonReader::path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
}

Error JsonReader::error(const std::string& key, const std::string& what) const {
    return Error(code_, path(key) + ": " + what);
}

bool JsonReader::has(const std::string& key) const {
    return j_->contains(key) && !(*j_)[key].is_null();
}

const Json& JsonReader::at(const std::string& key) {
    seen_.insert(key);
    if (!j_->contains(key)) throw error(key, "missing required key");
    return (*j_)[key];
}

const Json* JsonReader::find(const std::string& key) {
    seen_.insert(key);
    return j_->contains(key) ? &(*j_)[key] : nullptr;
}

JsonReader JsonReader::object(const std::string& key) {
    return JsonReader(at(key), path(key), code_);
}

double JsonReader::number(const std::string& key) {
    return json_number(at(key), path(key), code_);
}

double JsonReader::number(const std::string& key, double fallback) {
    seen_.insert(key);
    return has(key) ? number(key) : fallback;
}

long long JsonReader::integer(const std::string& key) {
    const Json& j = at(key);
    if (!j.is_number_integer()) throw error(key, "expected an integer");
    return j.get<long long>();
}

long long JsonReader::integer(const std::string& key, long long fallback) {
    seen_.insert(key);
    return has(key) ? integer(key) : fallback;
}

bool JsonReader::boolean(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!has(key)) return fallback;
    const Json& j = (*j_)[key];
    if (!j.is_boolean()) throw error(key, "expected true or false");
    return j.get<bool>();
}

std::string JsonReader::string(const std::string& key) {
    const Json& j = at(key);
    if (!j.is_string()) throw error(key, "expected a string");
    return j.get<std::string>();
}

std::string JsonReader::string(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    return has(key) ? string(key) : fallback;
}

Vec JsonReader::vec(const std::string& key) {
    return json_vec(at(key), path(key), code_);
}

Mat JsonReader::mat(const std::string& key) {
    return json_mat(at(key), path(key), code_);
}

std::vector<double> JsonReader::numbers(const std::string& key) {
    const Vec v = vec(key);
    return {v.data(), v.data() + v.size()};
}

std::vector<int> JsonReader::integers(const std::string& key) {
    const Json& j = at(key);
    if (!j.is_array()) throw error(key, "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : j) {
        if (!e.is_number_integer()) throw error(key, "expected an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

void JsonReader::finish() const {
    for (const auto& [k, v] : j_->items()) {
        if (!seen_.count(k)) throw error(k, "unknown key");
    }
}

}  // namespace koopman
