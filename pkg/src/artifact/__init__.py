"""Numerics for the Bogoliubov theory of a dilute Bose gas in a periodic box.

Submodules:
    potential    radial interactions and their Fourier transforms
    scattering   zero-energy scattering, Neumann problem, correlation kernel
    bogoliubov   coefficient families, energy constants, spectrum
    lattice      conditionally convergent lattice sums and Born series
    fock         truncated Fock-space operators and identity checks
    cli          batch front end
"""

__version__ = "0.1.0"
