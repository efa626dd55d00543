#include "cli.hpp"

int main(int argc, char** argv) { return glhm::cli::dispatch(argc, argv); }
