# Generated by Django 5.2.8

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created', models.DateTimeField(auto_now_add=True)),
                ('seed', models.BigIntegerField()),
                ('config_hash', models.CharField(max_length=64)),
                ('case_name', models.CharField(max_length=100)),
                ('out_dir', models.CharField(max_length=500)),
                ('attacker', models.CharField(max_length=20)),
                ('epsilon', models.FloatField()),
                ('n_adv', models.IntegerField()),
                ('days', models.IntegerField(default=0)),
            ],
            options={
                'ordering': ['-created'],
            },
        ),
        migrations.CreateModel(
            name='DayOutcome',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('day', models.CharField(max_length=16)),
                ('strategy', models.CharField(choices=[('clean', 'Clean'), ('best_first', 'Best first'), ('random', 'Random')], max_length=20)),
                ('shed_mwh', models.FloatField()),
                ('shed_occurred', models.BooleanField()),
                ('total_cost', models.FloatField()),
                ('cost_delta', models.FloatField(default=0.0)),
                ('queries_used', models.IntegerField(default=0)),
                ('nodes', models.CharField(blank=True, max_length=200)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='outcomes', to='forecastattack.experimentrun')),
            ],
            options={
                'ordering': ['run', 'day', 'strategy'],
                'constraints': [models.UniqueConstraint(fields=('run', 'day', 'strategy'), name='one_outcome_per_day')],
            },
        ),
    ]
