#include "oniondos/cli.hpp"

int main(int argc, char** argv) { return oniondos::dispatch(argc, argv); }
