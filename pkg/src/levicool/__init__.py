"""levicool: quantum model of parametric-feedback cooling and force sensing
for an optically levitated nanoparticle."""

__version__ = "0.1.0"
