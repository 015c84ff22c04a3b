// ----------------------------------------------------------------------------
// Copyright 2026 The ABC Attention Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#include "abc/config.hpp"
#include "abc/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace abc
{

namespace
{

constexpr char kMagic[4] = {'A', 'B', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T value)
{
    static_assert(std::is_integral_v<T> || std::is_floating_point_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& path)
{
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
        throw IoError("checkpoint '" + path + "' is truncated");
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace

void save_arrays(const std::string& path, const std::vector<std::pair<std::string, Matrix>>& arrays)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, m] : arrays)
    {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint64_t>(out, m.rows());
        put<std::uint64_t>(out, m.cols());
    }
    for (const auto& entry : arrays)
        for (double x : entry.second.flat())
            put<double>(out, x);
    if (!out)
        throw IoError("failed writing checkpoint '" + path + "'");
}

std::vector<std::pair<std::string, Matrix>> load_arrays(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("'" + path + "' is not a checkpoint");
    if (take<std::uint32_t>(in, path) != kVersion)
        throw IoError("checkpoint '" + path + "' has an unsupported version");
    const auto count = take<std::uint32_t>(in, path);
    std::vector<std::pair<std::string, Matrix>> arrays;
    for (std::uint32_t a = 0; a < count; ++a)
    {
        const auto len = take<std::uint32_t>(in, path);
        std::string name(len, '\0');
        if (!in.read(name.data(), len))
            throw IoError("checkpoint '" + path + "' is truncated");
        const auto rows = take<std::uint64_t>(in, path);
        const auto cols = take<std::uint64_t>(in, path);
        arrays.emplace_back(std::move(name), Matrix(rows, cols));
    }
    for (auto& entry : arrays)
        for (double& x : entry.second.flat())
            x = take<double>(in, path);
    if (in.peek() != std::char_traits<char>::eof())
        throw IoError("checkpoint '" + path + "' has trailing bytes");
    return arrays;
}

void save_checkpoint(const std::string& path, const ToyModel& model)
{
    std::vector<std::pair<std::string, Matrix>> arrays;
    model.params.visit([&](const std::string& name, const Matrix& m) { arrays.emplace_back(name, m); });
    save_arrays(path, arrays);
    std::ofstream side(path + ".json", std::ios::trunc);
    if (!side)
        throw IoError("cannot write '" + path + ".json'");
    side << to_json(model.config).dump(2) << "\n";
}

ToyModel load_checkpoint(const std::string& path)
{
    const ToyModelConfig cfg = model_config_from_json(read_json_file(path + ".json"));
    ToyModel model = ToyModel::init(cfg);
    std::map<std::string, Matrix> loaded;
    for (auto& [name, m] : load_arrays(path))
        loaded.emplace(name, std::move(m));
    std::size_t used = 0;
    model.params.visit([&](const std::string& name, Matrix& m) {
        auto it = loaded.find(name);
        if (it == loaded.end())
            throw IoError("checkpoint '" + path + "' lacks array " + name);
        if (it->second.rows() != m.rows() || it->second.cols() != m.cols())
            throw IoError("checkpoint '" + path + "' array " + name + " has the wrong shape");
        m = it->second;
        ++used;
    });
    if (used != loaded.size())
        throw IoError("checkpoint '" + path + "' holds arrays this model does not have");
    return model;
}

}  // namespace abc
