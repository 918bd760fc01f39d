#pragma once

namespace causal_trees {

#ifdef CAUSAL_TREES_VERSION
inline constexpr const char* kVersion = CAUSAL_TREES_VERSION;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif

}  // namespace causal_trees
