#include "rotatlas/cli.hpp"

int main(int argc, char** argv) { return rotatlas::cli::dispatch(argc, argv); }
