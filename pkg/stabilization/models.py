from django.db import models
from django.utils import timezone


class Study(models.Model):
    """
    One experiment invocation: a pipeline run, the scalar example or a
    reactor Monte-Carlo sweep. The validated config is stored verbatim.
    """

    KIND_PIPELINE = "pipeline"
    KIND_SCALAR = "scalar_example"
    KIND_REACTOR = "reactor_study"
    KIND_CHOICES = [
        (KIND_PIPELINE, "Pipeline run"),
        (KIND_SCALAR, "Scalar example"),
        (KIND_REACTOR, "Batch reactor study"),
    ]

    name = models.CharField(max_length=255, db_index=True)
    kind = models.CharField(max_length=32, choices=KIND_CHOICES, db_index=True)
    base_seed = models.BigIntegerField(default=0)
    config = models.JSONField(default=dict)
    output_dir = models.CharField(max_length=1024, blank=True, default="")
    created_at = models.DateTimeField(default=timezone.now)

    class Meta:
        db_table = "studies"
        ordering = ["-created_at", "-id"]
        verbose_name_plural = "Studies"

    def __str__(self):
        return f"{self.name} ({self.kind})"


class RunRecord(models.Model):
    """A single data set and its synthesis outcome."""

    STATUS_FEASIBLE = "feasible"
    STATUS_INFEASIBLE = "infeasible"
    STATUS_FAILURE = "numerical_failure"
    STATUS_CHOICES = [
        (STATUS_FEASIBLE, "Feasible"),
        (STATUS_INFEASIBLE, "Infeasible"),
        (STATUS_FAILURE, "Numerical failure"),
    ]

    study = models.ForeignKey(Study, on_delete=models.CASCADE, related_name="runs")
    run_index = models.PositiveIntegerField()
    level = models.PositiveIntegerField(default=0, db_index=True)
    delta_w = models.FloatField(default=0.0)
    seed = models.BigIntegerField()

    # null when the run failed before the quantity was available
    rho = models.FloatField(null=True, blank=True)
    lambda_min_z = models.FloatField(null=True, blank=True)
    status = models.CharField(max_length=32, choices=STATUS_CHOICES, db_index=True)
    spectral_abscissa = models.FloatField(null=True, blank=True)
    decays = models.BooleanField(null=True, blank=True)
    wall_time = models.FloatField(default=0.0)

    class Meta:
        db_table = "run_records"
        ordering = ["study", "run_index"]
        constraints = [
            models.UniqueConstraint(fields=["study", "run_index"], name="unique_run_per_study"),
        ]

    def __str__(self):
        return f"{self.study.name} run {self.run_index}: {self.status}"
