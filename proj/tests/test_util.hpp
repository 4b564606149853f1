#ifndef MEAD_TEST_UTIL_HPP
#define MEAD_TEST_UTIL_HPP

#include "mead/core.hpp"
#include "mead/reference.hpp"

#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace testutil {

namespace fs = std::filesystem;

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = fs::temp_directory_path() / ("mead_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Signature estimate with zero covariances and the given rows.
inline mead::SignatureEstimate exact_signature(const mead::Matrix& u) {
    mead::SignatureEstimate sig;
    for (mead::Index g = 0; g < u.rows(); ++g) sig.gene_ids.push_back("g" + std::to_string(g + 1));
    for (mead::Index k = 0; k < u.cols(); ++k) sig.cell_types.push_back("t" + std::to_string(k + 1));
    sig.gamma_hat = mead::Vector::Ones(2);
    sig.u_hat = u;
    sig.v_hat.assign(static_cast<std::size_t>(u.rows()), mead::Matrix::Zero(u.cols(), u.cols()));
    sig.zero_signal.assign(static_cast<std::size_t>(u.rows()), false);
    sig.m = 2;
    return sig;
}

inline double max_abs(const mead::Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testutil

#endif  // MEAD_TEST_UTIL_HPP
