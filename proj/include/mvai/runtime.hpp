#pragma once

namespace mvai {

// Stops glibc from returning freed buffers to the kernel after every call.
// Training allocates and frees the same few hundred KB per layer; without
// this each allocation is a fresh mmap and pays page faults on first touch.
// No-op on other C libraries.
void retain_freed_memory();

}  // namespace mvai
