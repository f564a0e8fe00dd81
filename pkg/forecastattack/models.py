from django.db import models


class ExperimentRun(models.Model):
    created = models.DateTimeField(auto_now_add=True)
    seed = models.BigIntegerField()
    config_hash = models.CharField(max_length=64)
    case_name = models.CharField(max_length=100)
    out_dir = models.CharField(max_length=500)
    attacker = models.CharField(max_length=20)
    epsilon = models.FloatField()
    n_adv = models.IntegerField()
    days = models.IntegerField(default=0)

    class Meta:
        ordering = ["-created"]

    def __str__(self):
        return f"{self.case_name} seed={self.seed} ({self.config_hash[:8]})"

    def shed_days(self, strategy):
        return self.outcomes.filter(strategy=strategy, shed_occurred=True).count()


class DayOutcome(models.Model):
    STRATEGIES = [("clean", "Clean"), ("best_first", "Best first"), ("random", "Random")]

    run = models.ForeignKey(ExperimentRun, on_delete=models.CASCADE, related_name="outcomes")
    day = models.CharField(max_length=16)
    strategy = models.CharField(max_length=20, choices=STRATEGIES)
    shed_mwh = models.FloatField()
    shed_occurred = models.BooleanField()
    total_cost = models.FloatField()
    cost_delta = models.FloatField(default=0.0)
    queries_used = models.IntegerField(default=0)
    nodes = models.CharField(max_length=200, blank=True)

    class Meta:
        ordering = ["run", "day", "strategy"]
        constraints = [models.UniqueConstraint(fields=["run", "day", "strategy"], name="one_outcome_per_day")]
