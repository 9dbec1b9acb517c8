#include "sdl/cli.hpp"

int main(int argc, char** argv) { return sdl::cli::run(argc, argv); }
