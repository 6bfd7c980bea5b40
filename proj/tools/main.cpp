#include "mlpmcmc/runner.hpp"

int main(int argc, char** argv) { return mlpmcmc::cli_main(argc, argv); }
