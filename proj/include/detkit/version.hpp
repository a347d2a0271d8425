#pragma once

#define DETKIT_VERSION_MAJOR 0
#define DETKIT_VERSION_MINOR 1
#define DETKIT_VERSION_PATCH 0

namespace detkit {

inline const char* version_string() { return "0.1.0"; }

}  // namespace detkit
