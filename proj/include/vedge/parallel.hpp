// This file is part of the vedge project.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>

namespace vedge {

/// Number of workers implied by a --jobs value (0 means hardware concurrency).
int resolve_jobs(int jobs);

/// Runs fn(i) for i in [begin, end) on up to `jobs` worker threads.
///
/// Work items must write to disjoint output slots; under that contract the
/// result is identical for any job count. The first exception thrown by a
/// work item is rethrown on the calling thread after all workers join.
void parallel_for(int begin, int end, int jobs, const std::function<void(int)>& fn);

}  // namespace vedge
