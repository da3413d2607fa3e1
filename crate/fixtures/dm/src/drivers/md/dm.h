#ifndef DM_INTERNAL_H
#define DM_INTERNAL_H

#include "dm-core.h"

int dm_create(int minor, struct mapped_device **md);
void dm_destroy(struct mapped_device *md);
int dm_suspend(struct mapped_device *md, unsigned int suspend_flags);
int dm_resume(struct mapped_device *md);
struct dm_table *dm_get_live_table(struct mapped_device *md, int *srcu_idx);
int dm_table_create(struct dm_table **result, fmode_t mode, unsigned int num_targets,
		    struct mapped_device *md);
unsigned int dm_table_get_num_targets(struct dm_table *t);
struct dm_target *dm_table_find_target(struct dm_table *t, sector_t sector);

int dm_interface_init(void);
void dm_interface_exit(void);

#define DM_SUSPEND_LOCKFS_FLAG (1 << 0)
#define DM_SUSPEND_NOFLUSH_FLAG (1 << 1)

#endif
