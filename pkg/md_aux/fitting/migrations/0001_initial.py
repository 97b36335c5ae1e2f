# Generated by Django 5.2.7 on 2026-10-17 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='FitRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scheme', models.CharField(choices=[('gibbs', 'Gibbs sampling'), ('expectation', 'Expectation updates')], max_length=16)),
                ('seed', models.CharField(blank=True, max_length=20)),
                ('sweeps', models.PositiveIntegerField()),
                ('n_parents', models.PositiveIntegerField(verbose_name='Parents (J)')),
                ('n_categories', models.PositiveIntegerField(verbose_name='Categories (K)')),
                ('n_groups', models.PositiveIntegerField(verbose_name='Groups (D)')),
                ('final_log_joint', models.FloatField(blank=True, null=True)),
                ('version', models.CharField(blank=True, max_length=32)),
                ('report', models.JSONField()),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ('-created_at',),
            },
        ),
    ]
