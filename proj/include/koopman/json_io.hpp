#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "koopman/errors.hpp"
#include "koopman/numerics.hpp"

namespace koopman {

using Json = nlohmann::json;

// Matrices are arrays of rows; vectors are flat arrays.
Json to_json(const Mat& m);
Json to_json(const Vec& v);

/// Typed, strict access to one JSON object. Every failure throws an Error with
/// the configured code and the dotted path of the offending key; finish()
/// rejects keys that were never read.
class JsonReader {
public:
    JsonReader(const Json& j, std::string path, ErrorCode code);

    [[nodiscard]] bool has(const std::string& key) const;
    const Json& at(const std::string& key);
    // Marks the key as read; nullptr when absent.
    const Json* find(const std::string& key);
    JsonReader object(const std::string& key);

    double number(const std::string& key);
    double number(const std::string& key, double fallback);
    long long integer(const std::string& key);
    long long integer(const std::string& key, long long fallback);
    bool boolean(const std::string& key, bool fallback);
    std::string string(const std::string& key);
    std::string string(const std::string& key, const std::string& fallback);
    Vec vec(const std::string& key);
    Mat mat(const std::string& key);
    std::vector<double> numbers(const std::string& key);
    std::vector<int> integers(const std::string& key);

    [[nodiscard]] Error error(const std::string& key, const std::string& what) const;
    [[nodiscard]] std::string path(const std::string& key) const;
    void finish() const;

private:
    const Json* j_;
    std::string path_;
    ErrorCode code_;
    std::set<std::string> seen_;
};

double json_number(const Json& j, const std::string& path, ErrorCode code);
Vec json_vec(const Json& j, const std::string& path, ErrorCode code);
Mat json_mat(const Json& j, const std::string& path, ErrorCode code);

}  // namespace koopman
