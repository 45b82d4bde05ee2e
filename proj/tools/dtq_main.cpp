#include "dtq/config_io.hpp"

int main(int argc, char** argv) { return dtq::cli_main(argc, argv); }
