#pragma once

namespace lmcpf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace lmcpf
