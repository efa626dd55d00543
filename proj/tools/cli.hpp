#pragma once

namespace glhm::cli {

//! Exit status: 0 all checks pass, 1 a check failed, 2 usage or IO error.
int dispatch(int argc, char** argv);

} // namespace glhm::cli
