#ifndef _LINUX_RDS_H
#define _LINUX_RDS_H

#include <linux/types.h>

#define RDS_CANCEL_SENT_TO	1
#define RDS_GET_MR		2
#define RDS_FREE_MR		3
#define RDS_RECVERR		5
#define RDS_CONG_MONITOR	6

#define RDS_INFO_COUNTERS	10000
#define RDS_INFO_CONNECTIONS	10001

typedef __u64 rds_rdma_cookie_t;

struct rds_iovec {
	__u64 addr;
	__u64 bytes;
};

struct rds_free_mr_args {
	rds_rdma_cookie_t cookie;
	__u64 flags;
};

struct rds_info_counter {
	__u8 name[32];
	__u64 value;
};

#define RDS_RDMA_INVALIDATE	0x0008
#define RDS_RDMA_USE_ONCE	0x0010

#endif
