"""Teacher-student compression with GAN-augmented compression sets."""

__version__ = "0.1.0"
