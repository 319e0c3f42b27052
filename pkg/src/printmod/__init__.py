"""Human-in-the-loop moderation pipeline for shared 3D-printing content."""

__version__ = "0.1.0"
