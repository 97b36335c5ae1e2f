from __future__ import annotations

from typing import Any

from django.db import models


class FitRunManager(models.Manager):
    """Manager that archives finished ``fit`` reports and looks them up again.

    The numerical library never touches the database; only ``fit --record``
    goes through this manager.

    Notes:
        - A report is stored as produced, so an archived run can be compared
          byte for byte with a fresh run of the same configuration and seed.
        - The summary columns are copied out of the report to make the admin
          list filterable without parsing JSON.
    """

    def record(self, report: dict[str, Any]) -> FitRun:
        """Create a ``FitRun`` row from a ``fit`` report.

        Args:
            report (dict): The dictionary built by ``fitting.dataio.build_fit_report``.

        Raises:
            KeyError: If the report lacks the ``config`` or ``parents`` sections.

        Steps:
            1. Read the dimensions and scheme from the embedded configuration.
            2. Take the last log-joint value of the trace (``None`` for a run
               without sweeps).
            3. Save the row together with the full report.
        """
        config = report['config']
        trace = report.get('log_joint_trace') or []
        return self.create(
            scheme=config['scheme'],
            seed='' if config.get('seed') is None else str(config['seed']),
            sweeps=config['sweeps'],
            n_parents=config['n_parents'],
            n_categories=config['n_categories'],
            n_groups=len(report['aux_totals']['groups']),
            final_log_joint=trace[-1] if trace else None,
            version=report.get('version', ''),
            report=report,
        )

    def for_config(self, n_parents: int, n_categories: int, scheme: str | None = None) -> models.QuerySet:
        """Archived runs with the given dimensions, newest first."""
        runs = self.filter(n_parents=n_parents, n_categories=n_categories)
        if scheme is not None:
            runs = runs.filter(scheme=scheme)
        return runs.order_by('-created_at', '-pk')


class FitRun(models.Model):
    """One archived ``fit`` run.

    Attributes:
        scheme (CharField): ``gibbs`` or ``expectation``.
        seed (CharField): Seed of the run in decimal digits (up to 2**64 - 1, beyond
            SQLite's signed integers); empty for seedless expectation runs.
        sweeps (PositiveIntegerField): Number of sweeps performed.
        n_parents, n_categories, n_groups (PositiveIntegerField): J, K and D.
        final_log_joint (FloatField): Last entry of the log-joint trace.
        version (CharField): Library version that produced the report.
        report (JSONField): The full report.
        created_at (DateTimeField): Archive time.
    """
    SCHEME_CHOICES = [
        ('gibbs', 'Gibbs sampling'),
        ('expectation', 'Expectation updates'),
    ]

    scheme = models.CharField(max_length=16, choices=SCHEME_CHOICES)
    seed = models.CharField(max_length=20, blank=True)
    sweeps = models.PositiveIntegerField()
    n_parents = models.PositiveIntegerField(verbose_name='Parents (J)')
    n_categories = models.PositiveIntegerField(verbose_name='Categories (K)')
    n_groups = models.PositiveIntegerField(verbose_name='Groups (D)')
    final_log_joint = models.FloatField(null=True, blank=True)
    version = models.CharField(max_length=32, blank=True)
    report = models.JSONField()
    created_at = models.DateTimeField(auto_now_add=True)

    objects = FitRunManager()

    class Meta:
        ordering = ('-created_at',)

    def __str__(self) -> str:
        return f"{self.scheme} fit J={self.n_parents} K={self.n_categories} D={self.n_groups} seed={self.seed or '-'}"
