"""Monolithic FSI solver with GMRES + geometric multigrid (AS / FS smoothers)."""

__version__ = "0.1.0"
