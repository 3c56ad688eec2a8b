// SPDX-License-Identifier: Apache-2.0
/**
 * @file   version.hpp
 * @brief  Library version string.
 */
#pragma once

namespace senscal {

inline constexpr const char *kVersion = "0.1.0";

} // namespace senscal
