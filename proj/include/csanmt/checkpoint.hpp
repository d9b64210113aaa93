#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "csanmt/optim.hpp"

namespace csanmt {

// Binary model snapshot: string metadata plus named tensors, written in a
// fixed order so identical state produces identical bytes. Intentionally
// carries no timestamps.
struct Checkpoint {
    std::map<std::string, std::string> meta;
    ParamStore params;

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

    const std::string& require_meta(const std::string& key) const;
    int meta_int(const std::string& key) const;
};

} // namespace csanmt
